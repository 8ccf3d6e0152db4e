use thiserror::Error;

/// Errors produced by the calibration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The undamped normal equations cannot be solved reliably.
    #[error(
        "normal equations are singular or ill-conditioned (condition estimate {condition:.3e}); \
         ordinary least squares may produce wrong deviations when the error model has redundant \
         parameters, use the damped solver (lm) instead"
    )]
    Singular { condition: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A malformed line in a measurement file. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::InvalidArgument(format!(
            "{what}[{i}] is not finite ({})",
            values[i]
        ))),
    }
}
