use pemo_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("enumeration needs {required} permutations, above the cap of {cap}")]
    CapExceeded { required: u128, cap: usize },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown {kind} `{name}`; known: {known}")]
    Unknown {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("module `{0}` is not present in the parameter pool")]
    MissingModule(String),

    #[error("no oracle value cached for {0}")]
    MissingOracle(String),

    #[error("bisection on the power multiplier failed: {0}")]
    Bisection(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Dimension(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Invalid(msg.into()))
}
