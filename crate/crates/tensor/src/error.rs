use thiserror::Error;

/// Errors raised by tensor construction, graph operations and the optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: invalid shape {shape:?} ({reason})")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    #[error("{op}: argument outside the domain (value {value} at index {index})")]
    Domain {
        op: &'static str,
        index: usize,
        value: f64,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("variable {0} does not belong to this graph")]
    UnknownVar(usize),

    #[error("parameter {0} has no gradient")]
    MissingGrad(usize),

    #[error("weight container: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for TensorError {
    fn from(err: std::io::Error) -> Self {
        TensorError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;
