use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {rows}x{cols}: both must be at least 1")]
    InvalidDimension { rows: usize, cols: usize },

    #[error("data length {got} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, got: usize },

    #[error("{op}: shape mismatch, expected {expected:?} but got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("result of {rows}x{cols} = {requested} elements exceeds the element budget of {budget}")]
    SizeBudget {
        rows: usize,
        cols: usize,
        requested: usize,
        budget: usize,
    },

    #[error("column {index} has zero norm")]
    DegenerateColumn { index: usize },

    #[error("mutual coherence is undefined for a matrix with {cols} column(s)")]
    UndefinedCoherence { cols: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("reconstruction diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        trace: Box<crate::ista::ReconTrace>,
    },

    #[error("malformed data at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            reason: reason.into(),
        }
    }

    /// True for failures that come from the numerics (divergence, degenerate
    /// input, overflow) rather than from I/O or caller misuse.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Divergence { .. }
                | Error::DegenerateColumn { .. }
                | Error::UndefinedCoherence { .. }
        )
    }
}
