use thiserror::Error;

#[derive(Debug, Error)]
pub enum QnnError {
    #[error("{op}: bad shape {got:?}, expected {expected}")]
    BadShape { op: &'static str, got: Vec<usize>, expected: String },
    #[error("conv2d: input has {input} channels but kernels expect {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("softmax_cross_entropy: row {row} of labels is not one-hot")]
    NotOneHot { row: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("non-finite parameter tensor: {0}")]
    NonFiniteParam(String),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ad(#[from] autodiff::AdError),
    #[error(transparent)]
    Qsim(#[from] qsim::QsimError),
}

pub type Result<T> = std::result::Result<T, QnnError>;
