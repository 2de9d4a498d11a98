use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight function {name} cannot be evaluated at {x}")]
    Domain { name: &'static str, x: f64 },

    #[error("index range {start}..{end} is invalid for a fit of length {len}")]
    Range { start: usize, end: usize, len: usize },

    #[error("Murphy curves were evaluated on different grids")]
    GridMismatch,

    #[error("relation is not a partial order: cycle {}", .0.join(" <= "))]
    Cycle(Vec<String>),

    #[error("unknown node {0:?}")]
    UnknownNode(String),

    #[error("poset too large: {what} is {actual}, limit {limit}")]
    TooLarge {
        what: &'static str,
        actual: usize,
        limit: usize,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
