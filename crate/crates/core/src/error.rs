use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("integration failed at t = {t}: {msg}")]
    Integration { t: f64, msg: String },
    #[error("accuracy: {0}")]
    Accuracy(String),
    #[error("convergence check failed: {0}")]
    Convergence(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty chaotic layer: {0}")]
    EmptyLayer(String),
    #[error("aliasing: {0}")]
    Aliasing(String),
    #[error("linear algebra: {0}")]
    Linalg(String),
}

impl LabError {
    /// Short machine-readable tag, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::InvalidParameter(_) => "invalid_parameter",
            LabError::Range(_) => "range",
            LabError::NoSolution(_) => "no_solution",
            LabError::Integration { .. } => "integration",
            LabError::Accuracy(_) => "accuracy",
            LabError::Convergence(_) => "convergence",
            LabError::InsufficientData(_) => "insufficient_data",
            LabError::EmptyLayer(_) => "empty_layer",
            LabError::Aliasing(_) => "aliasing",
            LabError::Linalg(_) => "linalg",
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidParameter(msg.into()))
}
