use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("invalid distillation config: {0}")]
    InvalidConfig(String),
    #[error("non-finite inner gradient in parameter group {group:?} (inner step {step})")]
    NonFiniteInnerGrad { group: String, step: usize },
    #[error("outer loss is not finite at outer step {step}")]
    NanOuterLoss { step: usize },
    #[error("{path}: {msg}")]
    BadFile { path: String, msg: String },
    #[error("{0}")]
    Model(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ad(#[from] autodiff::AdError),
}

impl From<qnn::QnnError> for DistillError {
    fn from(e: qnn::QnnError) -> Self {
        DistillError::Model(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DistillError>;
