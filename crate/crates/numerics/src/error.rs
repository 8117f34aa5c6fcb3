use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: non-finite value at flat index {index}")]
    NonFinite { op: &'static str, index: usize },

    #[error("{op}: invalid argument ({detail})")]
    InvalidArg { op: &'static str, detail: String },

    #[error("tape state: {0}")]
    TapeState(&'static str),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("parameter `{0}` already registered")]
    DuplicateParam(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
