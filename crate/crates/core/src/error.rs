use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("missing column `{column}` in panel header")]
    MissingColumn { column: String },

    #[error("line {line}, column `{column}`: `{value}` is not a number")]
    NonNumeric {
        line: usize,
        column: String,
        value: String,
    },

    #[error("line {line}, column `price`: price must be positive, got {value}")]
    NonPositivePrice { line: usize, value: f64 },

    #[error("line {line}, column `{column}`: {message}")]
    InvalidCell {
        line: usize,
        column: String,
        message: String,
    },

    #[error("line {line}: duplicate observation for province `{province}`, year {year}, class `{class}`")]
    DuplicateKey {
        line: usize,
        province: String,
        year: i32,
        class: String,
    },

    #[error("no fleet parameters for vehicle class `{class}`")]
    MissingFleetEntry { class: String },

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("rank-deficient regressors: {message}")]
    RankDeficient { goods: Vec<String>, message: String },

    #[error("estimation did not converge after {iterations} iterations (last change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("regressor `{regressor}` has zero variance for `{good}`")]
    ZeroVariance { good: String, regressor: String },

    #[error("share of `{good}` is {share}; elasticities need strictly positive shares")]
    ZeroShare { good: String, share: f64 },

    #[error("fit has no parameter covariance")]
    MissingCovariance,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("concentration {concentration} is below background {background} for {pollutant}")]
    BelowBackground {
        pollutant: String,
        concentration: f64,
        background: f64,
    },

    #[error("scenario `{scenario}` has no shock for fuel `{fuel}`")]
    MissingShock { scenario: String, fuel: String },

    #[error("missing input: {0}")]
    MissingInput(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
