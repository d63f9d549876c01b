//! Abstract syntax for the XP, XP-with-intersection and nested-intersection
//! dialects, plus the canonical printer.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Edge kind between a node and the next step: `/` or `//`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Child,
    Descendant,
}

impl Axis {
    pub fn sep(self) -> &'static str {
        match self {
            Axis::Child => "/",
            Axis::Descendant => "//",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dialect {
    /// Plain absolute paths.
    Xp,
    /// One level of intersection, optionally followed by a relative path.
    XpCap,
    /// Arbitrarily nested intersections and navigation.
    XpInt,
}

impl Dialect {
    pub fn name(self) -> &'static str {
        match self {
            Dialect::Xp => "XP",
            Dialect::XpCap => "XPCap",
            Dialect::XpInt => "XPInt",
        }
    }
}

/// One location step `axis label [pred]...`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub axis: Axis,
    pub label: String,
    pub preds: Vec<Pred>,
}

impl Step {
    pub fn new(axis: Axis, label: impl Into<String>) -> Self {
        Step { axis, label: label.into(), preds: Vec::new() }
    }

    pub fn with_pred(mut self, pred: Pred) -> Self {
        self.preds.push(pred);
        self
    }
}

/// A predicate `[rpath]`, `[rpath="C"]`, `[.//rpath]` or `[.//rpath="C"]`.
/// The leading axis is the axis of the first step.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pred {
    pub path: Vec<Step>,
    pub value: Option<String>,
}

impl Pred {
    pub fn leading_axis(&self) -> Axis {
        self.path[0].axis
    }
}

/// `doc("name")` followed by a non-empty relative path.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbsPath {
    pub doc: String,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Path(AbsPath),
    /// Intersection of two or more operands. A nested `Intersect` operand
    /// stands for a parenthesized intersection.
    Intersect(Vec<Expr>),
    /// `(expr)/rpath` or `(expr)//rpath`; the axis is the first step's.
    Nav(Box<Expr>, Vec<Step>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct XpAst {
    pub dialect: Dialect,
    pub expr: Expr,
}

impl Expr {
    /// Smallest dialect that admits this expression.
    pub fn min_dialect(&self) -> Dialect {
        match self {
            Expr::Path(_) => Dialect::Xp,
            Expr::Intersect(items) => {
                if items.iter().all(|e| matches!(e, Expr::Path(_))) {
                    Dialect::XpCap
                } else {
                    Dialect::XpInt
                }
            }
            Expr::Nav(inner, _) => match inner.as_ref() {
                Expr::Path(_) => Dialect::XpCap,
                Expr::Intersect(items) if items.iter().all(|e| matches!(e, Expr::Path(_))) => {
                    Dialect::XpCap
                }
                _ => Dialect::XpInt,
            },
        }
    }

    /// Names of the documents referenced, in order of appearance.
    pub fn docs(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_docs(&mut out);
        out
    }

    fn collect_docs(&self, out: &mut Vec<String>) {
        match self {
            Expr::Path(p) => out.push(p.doc.clone()),
            Expr::Intersect(items) => items.iter().for_each(|e| e.collect_docs(out)),
            Expr::Nav(inner, _) => inner.collect_docs(out),
        }
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

pub(crate) fn write_steps(f: &mut impl fmt::Write, steps: &[Step]) -> fmt::Result {
    for s in steps {
        f.write_str(s.axis.sep())?;
        write_step_body(f, s)?;
    }
    Ok(())
}

fn write_step_body(f: &mut impl fmt::Write, s: &Step) -> fmt::Result {
    f.write_str(&s.label)?;
    for p in &s.preds {
        write_pred(f, p)?;
    }
    Ok(())
}

pub(crate) fn write_pred(f: &mut impl fmt::Write, p: &Pred) -> fmt::Result {
    f.write_char('[')?;
    if p.leading_axis() == Axis::Descendant {
        f.write_str(".//")?;
    }
    write_step_body(f, &p.path[0])?;
    write_steps(f, &p.path[1..])?;
    if let Some(v) = &p.value {
        f.write_char('=')?;
        f.write_str(&quote(v))?;
    }
    f.write_char(']')
}

impl fmt::Display for AbsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "doc({})", quote(&self.doc))?;
        write_steps(f, &self.steps)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Path(p) => write!(f, "{p}"),
            Expr::Intersect(items) => {
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    match e {
                        Expr::Intersect(_) => write!(f, "({e})")?,
                        _ => write!(f, "{e}")?,
                    }
                }
                Ok(())
            }
            Expr::Nav(inner, steps) => {
                write!(f, "({inner})")?;
                write_steps(f, steps)
            }
        }
    }
}

impl fmt::Display for XpAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

/// Canonical text of an AST.
pub fn print(ast: &XpAst) -> String {
    ast.expr.to_string()
}

/// Text of a relative path, e.g. `//figure/image`.
pub fn print_steps(steps: &[Step]) -> String {
    let mut s = String::new();
    write_steps(&mut s, steps).expect("writing to a String cannot fail");
    s
}
