use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: bad IDX magic {got:#010x}, expected {expected:#010x}")]
    BadIdxMagic { path: String, got: u32, expected: u32 },
    #[error("{path}: truncated file ({msg})")]
    Truncated { path: String, msg: String },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: length {len} not divisible by CIFAR record size 3073")]
    BadCifarLength { path: String, len: usize },
    #[error("{path}: record {record} has label byte {label} >= 10")]
    BadLabel { path: String, record: usize, label: u8 },
    #[error("recomputed {name} statistic {got:.5} deviates from reference {reference:.5} by more than 1e-2")]
    StatisticsSanity { name: String, got: f64, reference: f64 },
    #[error("{path}: {msg}")]
    BadImageFile { path: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;
