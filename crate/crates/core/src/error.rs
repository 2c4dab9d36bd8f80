use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate weights: every log weight is -inf")]
    DegenerateWeights,

    #[error("model evaluation failed: {0}")]
    ModelEvaluation(String),

    #[error("power iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("unsupported diagnostic: {0}")]
    UnsupportedDiagnostic(String),

    #[error("internal invariant violated: {0}")]
    InvariantFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
