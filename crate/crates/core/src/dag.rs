//! DAG construction for intersections, view sets and unfolding.

use crate::ast::{Dialect, Expr, Step, XpAst};
use crate::error::{Error, Result};
use crate::parser::parse;
use crate::pattern::{NodeId, Pattern};
use std::collections::HashMap;

/// Named view definitions over a base document, in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ViewSet {
    views: Vec<(String, Pattern)>,
}

impl ViewSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a view.
    pub fn insert(&mut self, name: impl Into<String>, def: Pattern) {
        let name = name.into();
        if let Some(slot) = self.views.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = def;
        } else {
            self.views.push((name, def));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Pattern> {
        self.views.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Pattern)> {
        self.views.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn names(&self) -> Vec<&str> {
        self.views.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// Keeps only the named views.
    pub fn subset(&self, names: &[&str]) -> ViewSet {
        ViewSet { views: self.views.iter().filter(|(n, _)| names.contains(&n.as_str())).cloned().collect() }
    }

    /// Reads `name = expression` lines; blank lines and `#` comments are skipped.
    pub fn parse_text(text: &str) -> Result<ViewSet> {
        let mut vs = ViewSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, def) = line.split_once('=').ok_or_else(|| Error::Syntax {
                position: lineno,
                expected: "`name = expression`".into(),
            })?;
            let name = name.trim();
            let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !valid {
                return Err(Error::Syntax { position: lineno, expected: "a view name".into() });
            }
            vs.insert(name, Pattern::parse(def.trim())?);
        }
        Ok(vs)
    }

    pub fn to_text(&self) -> String {
        self.views.iter().map(|(n, p)| format!("{n} = {}\n", p.xpath())).collect()
    }
}

/// Coalesces the roots and the outputs of two patterns. `None` on a label
/// conflict.
pub fn intersect(a: &Pattern, b: &Pattern) -> Option<Pattern> {
    if a.label(a.root()) != b.label(b.root()) || a.label(a.out()) != b.label(b.out()) {
        return None;
    }
    if (a.out() == a.root()) != (b.out() == b.root()) {
        return None;
    }
    let mut d = a.clone();
    let mut map: HashMap<NodeId, NodeId> = HashMap::new();
    map.insert(b.root(), d.root());
    map.insert(b.out(), d.out());
    for n in b.ids() {
        if !map.contains_key(&n) {
            let m = d.add_node(b.label(n), b.test(n).map(str::to_string));
            map.insert(n, m);
        }
    }
    for (x, y, ax) in b.edges() {
        d.add_edge(map[&x], map[&y], ax);
    }
    Some(d)
}

/// Appends a relative path below the output.
pub fn navigate(d: &Pattern, steps: &[Step]) -> Pattern {
    let mut d = d.clone();
    let mut cur = d.out();
    for s in steps {
        cur = d.add_step(cur, s);
    }
    d.set_out(cur);
    d
}

/// dag(expr). With `views`, every `doc("v")/v...` head is replaced by the
/// definition of `v` (unfolding); `Ok(None)` is the empty pattern.
pub fn dag_from_expr(expr: &Expr, views: Option<&ViewSet>) -> Result<Option<Pattern>> {
    match expr {
        Expr::Path(p) => match views {
            None => Ok(Some(Pattern::from_path(p))),
            Some(vs) => {
                let def = vs.get(&p.doc).ok_or_else(|| Error::UnknownView(p.doc.clone()))?;
                let head = &p.steps[0];
                let mut d = def.clone();
                let o = d.out();
                for pr in &head.preds {
                    d.add_pred(o, pr);
                }
                Ok(Some(navigate(&d, &p.steps[1..])))
            }
        },
        Expr::Intersect(items) => {
            let mut acc: Option<Pattern> = None;
            for (i, e) in items.iter().enumerate() {
                let Some(d) = dag_from_expr(e, views)? else {
                    return Ok(None);
                };
                acc = if i == 0 {
                    Some(d)
                } else {
                    match intersect(acc.as_ref().unwrap(), &d) {
                        Some(x) => Some(x),
                        None => return Ok(None),
                    }
                };
            }
            Ok(acc)
        }
        Expr::Nav(inner, steps) => Ok(dag_from_expr(inner, views)?.map(|d| navigate(&d, steps))),
    }
}

/// unfold(r): the plan with each view head replaced by its definition.
pub fn unfold(plan: &XpAst, views: &ViewSet) -> Result<Option<Pattern>> {
    dag_from_expr(&plan.expr, Some(views))
}

/// Parses an intersection expression over the base document into its DAG.
pub fn parse_dag(text: &str) -> Result<Option<Pattern>> {
    let ast = parse(text, Dialect::XpInt)?;
    dag_from_expr(&ast.expr, None)
}
