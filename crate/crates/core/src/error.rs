use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose by {diff:e}")]
    NonSymmetric { row: usize, col: usize, diff: f64 },

    #[error("{source_name}, line {line}: {message}")]
    Row {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown cell (industry {industry}, region {region})")]
    UnknownCell { industry: u32, region: u32 },

    #[error("unknown firm {0}")]
    UnknownFirm(u32),

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("curve '{curve}' has no discount factor for tenor {tenor}")]
    MissingTenor { curve: String, tenor: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("missing calibration: {0}")]
    MissingCalibration(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad inputs (files, parameters, missing
    /// bundles) rather than by a numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::Io(_))
    }

    pub(crate) fn row(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Row {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
