use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("syntax error at offset {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("{construct} is not allowed in the {dialect} dialect")]
    Dialect { dialect: &'static str, construct: String },
    #[error("unknown view `{0}`")]
    UnknownView(String),
    #[error("node {0} is not on the main branch")]
    NotMainBranch(usize),
    #[error("cannot collapse nodes labeled `{0}` and `{1}`")]
    LabelMismatch(String, String),
    #[error("more than {0} interleavings")]
    CapExceeded(usize),
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("xml: {0}")]
    Xml(String),
    #[error("config: {0}")]
    Config(String),
    #[error("workload generation gave up after {0} attempts")]
    GenerationTimeout(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
