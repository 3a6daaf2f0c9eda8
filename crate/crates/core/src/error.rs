use thiserror::Error;

/// Errors raised while building, validating or evaluating diffusion models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain violation: {x} is outside [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("quadrature did not converge on [{a}, {b}]: estimate {value}, error {error}")]
    Quadrature { a: f64, b: f64, value: f64, error: f64 },

    #[error("value {y} is outside the range ({lo}, {hi}) of the function")]
    Range { y: f64, lo: f64, hi: f64 },

    #[error("invalid expression: {0}")]
    InvalidExpr(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("declared kink at {point} has jump {declared}, computed {computed}")]
    KinkMismatch { point: f64, declared: f64, computed: f64 },

    #[error("pushforward failed: {0}")]
    Pushforward(String),

    #[error("invalid model field `{field}`: {msg}")]
    Validation { field: String, msg: String },

    #[error("boundary {endpoint}: {msg}")]
    Boundary { endpoint: String, msg: String },

    #[error("semimartingale assumption violated: {0}")]
    NotSemimartingale(String),

    #[error("zero-rate criterion requires r = 0, got r = {0}")]
    NonZeroRate(f64),

    #[error("chain construction failed: {0}")]
    Chain(String),

    #[error("diagnostic not applicable: {0}")]
    Inapplicable(String),

    #[error("catalog: {0}")]
    Catalog(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
