use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("derivative order {requested} out of range (available 0..={available})")]
    OrderOutOfRange { requested: usize, available: usize },

    #[error("jet contains a non-finite entry")]
    NonFinite,

    #[error("integration blew up near t = {t} (entries exceed 1e300)")]
    BlowUp { t: f64 },

    #[error("insufficient coefficient jet order: need {needed}, provider carries {available}")]
    InsufficientOrder { needed: usize, available: usize },

    #[error("boundary node t = {t} does not coincide with a grid node")]
    NodeOffGrid { t: f64 },

    #[error("invalid boundary operator: {0}")]
    InvalidBoundary(String),

    #[error("characteristic matrix is singular at eps = {eps} (sigma_min/sigma_max = {ratio:e})")]
    SingularCharacteristicMatrix { eps: f64, ratio: f64 },

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
