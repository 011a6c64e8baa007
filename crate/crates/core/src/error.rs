use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("missing or null normals at {} point(s), first indices {:?}", .0.len(), &.0[..(.0.len().min(8))])]
    MissingNormals(Vec<usize>),

    #[error("not enough samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("model corruption: {0}")]
    ModelCorruption(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("record {index} has non-positive variance {variance}")]
    NonPositiveVariance { index: usize, variance: f64 },

    #[error("prediction failed at ({x}, {y}, {z}): {source}")]
    AtPoint {
        x: f64,
        y: f64,
        z: f64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
