use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum NervError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("not a nerv bitstream (bad magic)")]
    NotANervFile,

    #[error("unsupported bitstream version {0}")]
    UnsupportedVersion(u16),

    #[error("corrupt stream at byte {offset}: {reason}")]
    CorruptStream { offset: usize, reason: String },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, NervError>;

impl NervError {
    pub fn invalid_config(msg: impl Into<String>) -> Self {
        NervError::InvalidConfig(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        NervError::ShapeMismatch(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        NervError::Domain(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        NervError::Data(msg.into())
    }

    pub fn corrupt(offset: usize, reason: impl Into<String>) -> Self {
        NervError::CorruptStream {
            offset,
            reason: reason.into(),
        }
    }
}
