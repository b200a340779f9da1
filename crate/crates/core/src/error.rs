use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("partition {0} is empty")]
    EmptyPartition(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, row {row}, column `{column}`: {reason}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("protected column not binary: found {count} distinct values ({values})")]
    ProtectedNotBinary { count: usize, values: String },

    #[error("ragged tasks: task `{task}` has {rows} rows, expected {expected}")]
    RaggedTasks {
        task: String,
        rows: usize,
        expected: usize,
    },

    #[error("fold {fold} lacks partition {partition} in its training set")]
    FoldMissingPartition {
        fold: usize,
        partition: &'static str,
    },

    #[error(
        "no feasible solution is obtained: maximum attainable sum-rank {r_a_most} is below C = {c}"
    )]
    Infeasible { c: f64, r_a_most: f64 },

    #[error("instance of size {size} exceeds the exhaustive limit of {limit}")]
    InstanceTooLarge { size: usize, limit: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
