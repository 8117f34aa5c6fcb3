//! Error type shared by the training and evaluation drivers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
    #[error(transparent)]
    City(#[from] citysim::CitySimError),
    #[error(transparent)]
    Pm(#[from] pmvln::PmError),
    #[error(transparent)]
    Model(#[from] flpm::FlpmError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TaskError>;
