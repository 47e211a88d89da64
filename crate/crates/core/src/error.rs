use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("zero-norm rows for stimuli: {}", .0.join(", "))]
    DegenerateRows(Vec<String>),
    #[error("too few stimuli: need at least {needed}, got {found}")]
    TooFewStimuli { needed: usize, found: usize },
    #[error("constant input has zero variance")]
    ConstantInput,
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("inconsistent series: {0}")]
    SeriesInconsistent(String),
    #[error("curve too short: need at least {needed} points, got {found}")]
    TooShort { needed: usize, found: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("zero-variance voxels: {0:?}")]
    ZeroVariance(Vec<usize>),
    #[error("every voxel is constant")]
    EmptySeries,
    #[error("unknown region label {0:?}")]
    UnknownRegion(String),
    #[error("index {index} out of bounds for length {len}")]
    Bounds { index: usize, len: usize },
    #[error("data error: {0}")]
    Data(String),
}
