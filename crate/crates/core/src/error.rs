use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero-norm vector")]
    ZeroVector,

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("degenerate cohort for utterance {0}: cohort scores have zero spread")]
    DegenerateCohort(String),

    #[error("missing utterance: {0}")]
    MissingUtterance(String),

    #[error("score set has unlabeled entries ({0} of them)")]
    MissingLabels(usize),

    #[error("no {0} trials in score set")]
    EmptyClass(&'static str),

    #[error("numerical divergence at step {step}: loss = {loss}")]
    NumericalDivergence { step: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroVector
                | Error::SingularCovariance(_)
                | Error::DegenerateCohort(_)
                | Error::NumericalDivergence { .. }
        )
    }
}
