use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("graph contains a directed cycle")]
    Cycle,

    #[error("column {column} is constant and cannot be standardized")]
    DegenerateColumn { column: usize },

    #[error("conditioning set is numerically singular for ({i}, {j} | {set:?})")]
    Singular { i: usize, j: usize, set: Vec<usize> },

    #[error("degenerate correlation {0}: |r| must be < 1")]
    DegenerateCorrelation(f64),

    #[error("sample size {n} too small for a conditioning set of size {set_size}")]
    SampleSize { n: usize, set_size: usize },

    #[error("no separating set recorded for pair ({0}, {1})")]
    MissingSepset(usize, usize),

    #[error("parent design for node {node} is rank deficient")]
    DegenerateFit { node: usize },

    #[error("enumeration of {required} conditioning sets exceeds budget {budget}")]
    Budget { required: u128, budget: u128 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: usize },

    #[error("replicate with seed {seed} failed: {source}")]
    Replicate {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
