use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed container or manifest contents.
    #[error("format error: {0}")]
    Format(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Sequence pairs whose frame counts disagree beyond the allowed slack.
    #[error("length mismatch: {what} has {left} frames vs {right}")]
    LengthMismatch {
        what: String,
        left: usize,
        right: usize,
    },

    #[error("degenerate frame: {0}")]
    Degenerate(String),

    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("split leakage: {0}")]
    SplitLeakage(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

impl Error {
    /// Short stable identifier, used for structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Format(_) => "format",
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Degenerate(_) => "degenerate",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::NonFinite(_) => "non_finite",
            Error::SplitLeakage(_) => "split_leakage",
            Error::Diverged { .. } => "diverged",
        }
    }
}
