//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by sampling, estimation, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A request cannot be satisfied with the inputs as configured
    /// (e.g. an mMPA run on a cohort without risk scores).
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The data are structurally unusable (empty cohort, pool size larger
    /// than the cohort, missing input file).
    #[error("data error: {0}")]
    Data(String),

    /// An estimator could not produce a usable result (e.g. too many
    /// failed bootstrap resamples).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A cell of an input file failed to parse or validate.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        /// 1-based data row (header excluded).
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI contract: 2 validation, 3 data, 4 estimation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Configuration(_) | Error::Parse { .. } => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Estimation(_) => 4,
        }
    }
}
