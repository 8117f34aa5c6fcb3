//! Error type for environment generation and serialization.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CitySimError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}

pub type Result<T> = std::result::Result<T, CitySimError>;
