use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid argument: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("division by near-zero denominator (|d| < 1e-300)")]
    DivisionByZero,
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward: leaf {0} is not reachable from the loss")]
    UnreachableLeaf(usize),
    #[error("backward: leaf {0} does not require grad")]
    LeafWithoutGrad(usize),
    #[error("backward: var belongs to a different tape")]
    TapeMismatch,
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
}

pub type Result<T> = std::result::Result<T, AdError>;
