use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid interval ({lower}, {upper})")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("no sign change on bracket [{lower}, {upper}]")]
    Bracketing { lower: f64, upper: f64 },
    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("zero variance in column `{0}`")]
    ZeroVariance(String),
    #[error("infeasible target: {0}")]
    Infeasible(String),
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: alloc::boxed::Box::new(self),
        }
    }
}
