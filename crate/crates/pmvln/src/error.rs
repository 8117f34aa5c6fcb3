//! Error type for the priority-map module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PmError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}

pub type Result<T> = std::result::Result<T, PmError>;
