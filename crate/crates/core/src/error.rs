use thiserror::Error;

use crate::quadrature::QuadError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("constraint violated on `{field}`: {reason}")]
    ConstraintViolation { field: String, reason: String },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("integral is not finite: {0}")]
    NonIntegrable(String),

    #[error("jump integral did not converge: {0}")]
    NonConvergent(String),

    #[error("test function evaluated outside its domain at ({x}, {y})")]
    DomainError { x: f64, y: f64 },

    #[error("shape parameter `{name}` out of range: {reason}")]
    ShapeParamOutOfRange { name: &'static str, reason: String },

    #[error("no certifying constants found: {0}")]
    SearchFailed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("initial conditions are not ordered: {0}")]
    UnorderedInitial(String),

    #[error("cell has {got} paths, at least {need} required")]
    InsufficientPaths { got: usize, need: usize },

    #[error("{count} paths stopped before the last evaluation time {t_max}")]
    BoundaryContact { count: usize, t_max: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical scheme quality check failed: {0}")]
    SchemeQuality(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<QuadError> for Error {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::NonConvergent { .. } => Error::NonConvergent(e.to_string()),
            QuadError::NonFinite { .. } => Error::NonIntegrable(e.to_string()),
        }
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
