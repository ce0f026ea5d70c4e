use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("component {index}: weight {weight} is not positive")]
    NonPositiveWeight { index: usize, weight: f64 },

    #[error("component weights sum to {sum}, more than 1e-6 away from 1")]
    WeightSumMismatch { sum: f64 },

    #[error("component {index}: covariance is not symmetric positive-definite")]
    NonSpdCovariance { index: usize },

    #[error("concept `{concept}`: primary tags match no mixture component")]
    UnknownTagInConcept { concept: String },

    #[error("unknown concept `{0}`")]
    UnknownConcept(String),

    #[error("no mixture component shares a tag with the prompt")]
    EmptySupport,

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("switch index {n1} outside 0..={steps}")]
    BadSwitchIndex { n1: usize, steps: usize },

    #[error("cannot score an empty batch")]
    EmptyBatch,

    #[error("value {value} outside {range}")]
    OutOfRange { value: i64, range: &'static str },

    #[error("generator reply contained no parsable pairs")]
    EmptyReply,

    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),

    #[error("pattern name `{0}` has no ` and ` to split at")]
    UnsplittablePatternName(String),

    #[error("pair `{a}, {b}` is not bound to a world")]
    UnboundPair { a: String, b: String },

    #[error("store {path}: {message}")]
    Store { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
