use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter {field}: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("fit did not converge: residual {residual}")]
    FitNotConverged { residual: f64 },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("data format error: {0}")]
    DataFormat(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        SimError::InvalidParameter { field: field.to_string(), message: message.into() }
    }

    pub fn config(path: &str, message: impl Into<String>) -> Self {
        SimError::Config { path: path.to_string(), message: message.into() }
    }
}
