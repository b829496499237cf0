use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index error: {0}")]
    Index(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("estimator error: {0}")]
    Estimator(String),
    #[error("scope error: {0}")]
    Scope(String),
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("aggregate error: {0}")]
    Aggregate(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("bound violation: {0}")]
    BoundViolation(String),
    #[error("iteration {k}: {source}")]
    Iteration { k: usize, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_iteration(self, k: usize) -> Self {
        match self {
            Error::Iteration { .. } => self,
            other => Error::Iteration {
                k,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, with iteration context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            other => other,
        }
    }
}
