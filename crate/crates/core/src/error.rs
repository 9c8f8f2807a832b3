use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("input is empty")]
    EmptyInput,

    #[error("period {0} contains no days")]
    EmptyPeriod(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("series for {country} has a non-positive value at column {index}")]
    NonPositive { country: String, index: usize },

    #[error("series for {country} has zero variance")]
    ZeroVariance { country: String },

    #[error("analytic signal for {country} has zero power")]
    ZeroPower { country: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("all values are missing")]
    AllMissing,

    #[error("need at least {needed} non-missing values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("zero vector has no phase")]
    ZeroVector,

    #[error("missing spectrum for period {0}")]
    MissingSpectrum(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
