use alloc::string::String;

use crate::transforms::TransformKind;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{kind:?} parameter {index} = {value} is outside [{lo}, {hi}]")]
    OutOfBounds {
        kind: TransformKind,
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("trace set is empty")]
    EmptyTraceSet,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference bank has no traces for class {0}")]
    MissingClassBank(usize),
    #[error("evaluation subset is empty")]
    EmptySubset,
    #[error("threshold grids do not match")]
    GridMismatch,
    #[error("subset of {requested} requested from {available} inputs")]
    SubsetLargerThanDataset { requested: usize, available: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("no feasible individual in the final front")]
    EmptyFeasibleFront,
}
