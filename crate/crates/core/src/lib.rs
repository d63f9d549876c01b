//! Equivalent rewriting of XPath queries using intersections of
//! materialized views.

pub mod ast;
pub mod bench;
pub mod dag;
pub mod mapping;
pub mod nested;
pub mod error;
pub mod interleave;
pub mod eval;
pub mod fragment;
pub mod rules;
pub mod parser;
pub mod rewrite;
pub mod pattern;
pub mod workload;
pub mod xml;

pub use ast::{Axis, Dialect, Expr, XpAst};
pub use error::{Error, Result};
pub use parser::parse;
pub use pattern::{NodeId, Pattern};
