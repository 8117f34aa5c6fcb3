//! Error surface of the fusion framework.

use numerics::NumericsError;
use pmvln::PmError;

#[derive(Debug, thiserror::Error)]
pub enum FlpmError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Pm(#[from] PmError),
}

pub type Result<T> = std::result::Result<T, FlpmError>;
