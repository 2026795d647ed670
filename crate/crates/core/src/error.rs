use thiserror::Error;

/// Errors produced by the refinement engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("distribution fit failed: {0}")]
    FitFailure(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("invalid hint: {0}")]
    InvalidHint(String),

    #[error("operation requires simulated mode (ground truth)")]
    LiveMode,

    #[error("operation requires live mode")]
    SimulatedMode,

    #[error("interaction budget of {0} exhausted")]
    BudgetExhausted(usize),

    #[error("nothing to undo")]
    EmptyHistory,

    #[error("refiner backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("refiner request timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("refiner protocol error: {0}")]
    Protocol(String),

    #[error("refiner returned {found:?}, expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("unsupported or malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable, machine-parsable code for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::FitFailure(_) => "fit_failure",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::InvalidHint(_) => "invalid_hint",
            Error::LiveMode => "live_mode",
            Error::SimulatedMode => "simulated_mode",
            Error::BudgetExhausted(_) => "budget_exhausted",
            Error::EmptyHistory => "empty_history",
            Error::BackendUnavailable(_) => "backend_unavailable",
            Error::Timeout(_) => "timeout",
            Error::Protocol(_) => "protocol_error",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Format { .. } => "format_error",
            Error::Io(_) => "io_error",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
