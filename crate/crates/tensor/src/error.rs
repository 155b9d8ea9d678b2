use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: incompatible dimensions: {detail}")]
    IncompatibleDims { op: &'static str, detail: String },
    #[error("shape {shape:?} implies {expected} elements, buffer holds {got}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("invalid convolution spec: {0}")]
    InvalidConvSpec(String),
    #[error("invalid op argument: {0}")]
    InvalidArgument(String),
    #[error("unregistered op: {0}")]
    UnregisteredOp(String),
    #[error("value id {0} not on this tape")]
    UnknownValue(usize),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}

pub type Result<T> = std::result::Result<T, TensorError>;
