//! Recursive-descent parser for the expression dialects.
//!
//! ```text
//! expr  := term ('&' term)*            ('∩' is accepted for '&')
//! term  := '(' expr ')' rpath? | apath
//! apath := 'doc' '(' STRING ')' rpath
//! rpath := (('/' | '//') step)+
//! step  := LABEL pred*
//! pred  := '[' './/'? LABEL pred* (('/' | '//') step)* ('=' STRING)? ']'
//! ```

use crate::ast::{AbsPath, Axis, Dialect, Expr, Pred, Step, XpAst};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Label(String),
    Str(String),
    Slash,
    DSlash,
    DotDSlash,
    LBrack,
    RBrack,
    LParen,
    RParen,
    Eq,
    And,
    End,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Label(l) => format!("label `{l}`"),
        Tok::Str(_) => "string constant".into(),
        Tok::Slash => "`/`".into(),
        Tok::DSlash => "`//`".into(),
        Tok::DotDSlash => "`.//`".into(),
        Tok::LBrack => "`[`".into(),
        Tok::RBrack => "`]`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Eq => "`=`".into(),
        Tok::And => "`&`".into(),
        Tok::End => "end of input".into(),
    }
}

fn is_label_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, what: &str| Error::Syntax { position: pos, expected: what.to_string() };
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let next = chars.get(i + 1).map(|&(_, c)| c);
        match c {
            '/' if next == Some('/') => {
                out.push((Tok::DSlash, pos));
                i += 2;
            }
            '/' => {
                out.push((Tok::Slash, pos));
                i += 1;
            }
            '.' => {
                if next == Some('/') && chars.get(i + 2).map(|&(_, c)| c) == Some('/') {
                    out.push((Tok::DotDSlash, pos));
                    i += 3;
                } else {
                    return Err(err(pos, "`.//`"));
                }
            }
            '[' => {
                out.push((Tok::LBrack, pos));
                i += 1;
            }
            ']' => {
                out.push((Tok::RBrack, pos));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, pos));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, pos));
                i += 1;
            }
            '=' => {
                out.push((Tok::Eq, pos));
                i += 1;
            }
            '&' | '∩' => {
                out.push((Tok::And, pos));
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(text.len(), "closing `\"`")),
                        Some(&(_, '"')) => {
                            i += 1;
                            break;
                        }
                        Some(&(p, '\\')) => match chars.get(i + 1) {
                            Some(&(_, e @ ('"' | '\\'))) => {
                                s.push(e);
                                i += 2;
                            }
                            _ => return Err(err(p, "escape `\\\"` or `\\\\`")),
                        },
                        Some(&(_, ch)) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                out.push((Tok::Str(s), pos));
            }
            c if is_label_start(c) => {
                let start = i;
                while i < chars.len() && is_label_char(chars[i].1) {
                    i += 1;
                }
                let s: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                out.push((Tok::Label(s), pos));
            }
            _ => return Err(err(pos, "a label, `/`, `//`, `[`, `(` or `&`")),
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.i + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T> {
        Err(Error::Syntax {
            position: self.pos(),
            expected: format!("{expected}, found {}", describe(self.peek())),
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.fail(what)
        }
    }

    fn label(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Label(l) => {
                self.bump();
                Ok(l)
            }
            _ => self.fail("a label"),
        }
    }

    fn axis(&mut self) -> Option<Axis> {
        match self.peek() {
            Tok::Slash => {
                self.bump();
                Some(Axis::Child)
            }
            Tok::DSlash => {
                self.bump();
                Some(Axis::Descendant)
            }
            _ => None,
        }
    }

    fn step_body(&mut self, axis: Axis) -> Result<Step> {
        let label = self.label()?;
        let mut step = Step::new(axis, label);
        while *self.peek() == Tok::LBrack {
            step.preds.push(self.pred()?);
        }
        Ok(step)
    }

    fn rpath(&mut self) -> Result<Vec<Step>> {
        let mut steps = Vec::new();
        while let Some(axis) = self.axis() {
            steps.push(self.step_body(axis)?);
        }
        if steps.is_empty() {
            return self.fail("`/` or `//`");
        }
        Ok(steps)
    }

    fn pred(&mut self) -> Result<Pred> {
        self.expect(Tok::LBrack, "`[`")?;
        let lead = if *self.peek() == Tok::DotDSlash {
            self.bump();
            Axis::Descendant
        } else {
            Axis::Child
        };
        let mut path = vec![self.step_body(lead)?];
        while let Some(axis) = self.axis() {
            path.push(self.step_body(axis)?);
        }
        let value = if *self.peek() == Tok::Eq {
            self.bump();
            match self.bump() {
                Tok::Str(s) => Some(s),
                _ => {
                    self.i -= 1;
                    return self.fail("a quoted constant");
                }
            }
        } else {
            None
        };
        self.expect(Tok::RBrack, "`]`")?;
        Ok(Pred { path, value })
    }

    fn apath(&mut self) -> Result<AbsPath> {
        match self.peek() {
            Tok::Label(l) if l == "doc" && *self.peek2() == Tok::LParen => {}
            _ => return self.fail("`doc(\"...\")` or `(`"),
        }
        self.bump();
        self.bump();
        let doc = match self.bump() {
            Tok::Str(s) => s,
            _ => {
                self.i -= 1;
                return self.fail("a quoted document name");
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        let steps = self.rpath()?;
        Ok(AbsPath { doc, steps })
    }

    fn term(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::LParen {
            self.bump();
            let inner = self.expr()?;
            self.expect(Tok::RParen, "`)` or `&`")?;
            if matches!(self.peek(), Tok::Slash | Tok::DSlash) {
                let steps = self.rpath()?;
                return Ok(Expr::Nav(Box::new(inner), steps));
            }
            Ok(inner)
        } else {
            Ok(Expr::Path(self.apath()?))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let first = self.term()?;
        if *self.peek() != Tok::And {
            return Ok(first);
        }
        let mut items = vec![first];
        while *self.peek() == Tok::And {
            self.bump();
            items.push(self.term()?);
        }
        Ok(Expr::Intersect(items))
    }
}

/// Parse `text` under `dialect`.
pub fn parse(text: &str, dialect: Dialect) -> Result<XpAst> {
    let mut p = Parser { toks: lex(text)?, i: 0 };
    let expr = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("`&` or end of input");
    }
    check_dialect(&expr, dialect)?;
    Ok(XpAst { dialect, expr })
}

fn check_dialect(expr: &Expr, dialect: Dialect) -> Result<()> {
    let need = expr.min_dialect();
    let rank = |d: Dialect| match d {
        Dialect::Xp => 0,
        Dialect::XpCap => 1,
        Dialect::XpInt => 2,
    };
    if rank(need) > rank(dialect) {
        let construct = match (need, expr) {
            (Dialect::XpCap, Expr::Nav(..)) => "navigation after a parenthesized expression",
            (Dialect::XpCap, _) => "intersection",
            _ => "nested intersection",
        };
        return Err(Error::Dialect { dialect: dialect.name(), construct: construct.to_string() });
    }
    Ok(())
}

/// Parse a plain absolute path.
pub fn parse_xp(text: &str) -> Result<AbsPath> {
    match parse(text, Dialect::Xp)?.expr {
        Expr::Path(p) => Ok(p),
        _ => unreachable!("XP dialect admits only paths"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_descendant_chain() {
        let p = parse_xp(r#"doc("L")//paper//section"#).unwrap();
        assert_eq!(p.doc, "L");
        assert_eq!(p.steps.len(), 2);
        assert_eq!(p.steps[0].axis, Axis::Descendant);
        assert_eq!(p.steps[1].label, "section");
    }

    #[test]
    fn parses_all_predicate_forms() {
        let p = parse_xp(r#"doc("L")/a[b][c="x"][.//d][.//e/f="y"]"#).unwrap();
        let preds = &p.steps[0].preds;
        assert_eq!(preds.len(), 4);
        assert_eq!(preds[0].leading_axis(), Axis::Child);
        assert_eq!(preds[1].value.as_deref(), Some("x"));
        assert_eq!(preds[2].leading_axis(), Axis::Descendant);
        assert_eq!(preds[3].leading_axis(), Axis::Descendant);
        assert_eq!(preds[3].path.len(), 2);
        assert_eq!(preds[3].value.as_deref(), Some("y"));
    }

    #[test]
    fn nested_plan_needs_xpint() {
        let text = r#"(doc("v1")/v1 & doc("v2")/v2)//figure/image & doc("v3")/v3"#;
        let err = parse(text, Dialect::XpCap).unwrap_err();
        assert!(matches!(err, Error::Dialect { .. }));
        let ast = parse(text, Dialect::XpInt).unwrap();
        match &ast.expr {
            Expr::Intersect(items) => {
                assert_eq!(items.len(), 2);
                assert!(matches!(items[0], Expr::Nav(..)));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(ast.to_string(), text);
    }

    #[test]
    fn intersection_rejected_in_xp() {
        let err = parse(r#"doc("L")/a & doc("L")//a"#, Dialect::Xp).unwrap_err();
        assert!(matches!(err, Error::Dialect { .. }));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_xp(r#"doc("L")/a[b"#) {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_xp(r#"doc("L")"#), Err(Error::Syntax { .. })));
        assert!(matches!(parse_xp("a/b"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_xp(r#"doc("L")/a[./b]"#), Err(Error::Syntax { .. })));
    }

    #[test]
    fn whitespace_and_alias() {
        let a = parse(r#" doc("L") / a  ∩ doc( "L" )//a "#, Dialect::XpCap).unwrap();
        let b = parse(r#"doc("L")/a & doc("L")//a"#, Dialect::XpCap).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parenthesized_cpath() {
        let a = parse(r#"(doc("v1")/v1 & doc("v2")/v2)"#, Dialect::XpCap).unwrap();
        assert!(matches!(a.expr, Expr::Intersect(ref v) if v.len() == 2));
        let b = parse(r#"(doc("v1")/v1/image & doc("v2")/v2/image)/file"#, Dialect::XpCap).unwrap();
        assert!(matches!(b.expr, Expr::Nav(..)));
    }

    #[test]
    fn doc_is_an_ordinary_label_elsewhere() {
        let p = parse_xp(r#"doc("L")/doc/a"#).unwrap();
        assert_eq!(p.steps[0].label, "doc");
    }
}
