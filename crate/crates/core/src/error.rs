use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} did not converge (residual {residual:e})")]
    SolverFailure { what: &'static str, residual: f64 },

    #[error("{what} diverged at iteration {iteration}")]
    Divergence { what: &'static str, iteration: usize },

    #[error("rank deficient: lambda_r = {lambda_r:e} relative to lambda_1 = {lambda_1:e}")]
    RankDeficient { lambda_1: f64, lambda_r: f64 },

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("tuning failed: {0}")]
    TuningFailure(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SolverFailure { .. }
            | Error::Divergence { .. }
            | Error::RankDeficient { .. }
            | Error::UndefinedCorrelation(_)
            | Error::TuningFailure(_) => true,
            Error::InvalidParameter(_) | Error::Inconsistent(_) => false,
            Error::AtIteration { source, .. } => source.is_numerical(),
        }
    }
}
