use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed genome: gene {index}: {reason}")]
    MalformedGene { index: usize, reason: String },

    #[error("invalid genome shape: {0}")]
    GenomeShape(String),

    #[error(transparent)]
    Parse(#[from] crate::cgp::ParseError),

    #[error("unknown rule '{name}' (valid: {valid})")]
    UnknownRule { name: String, valid: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate covariance: eigengap ratio {ratio:.4} below {floor}")]
    Degenerate { ratio: f64, floor: f64 },

    #[error("covariance not positive definite")]
    NotPositiveDefinite,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid data file: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
