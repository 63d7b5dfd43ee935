use thiserror::Error;

/// Errors produced anywhere in the inheritance pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("{what} = {value} out of range ({allowed})")]
    Range {
        what: String,
        value: String,
        allowed: String,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint corrupted at {layer}: expected {expected} bytes, found {actual}")]
    Corruption {
        layer: String,
        expected: usize,
        actual: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn range(what: impl Into<String>, value: impl ToString, allowed: impl Into<String>) -> Self {
        Error::Range {
            what: what.into(),
            value: value.to_string(),
            allowed: allowed.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
