use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("edge list is empty")]
    EmptyInput,

    #[error("vertex {vertex} out of range (vertex count {vertex_count})")]
    VertexOutOfRange { vertex: u64, vertex_count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("{0}")]
    Precondition(String),

    #[error("requested {requested} threads but only {available} hardware threads are available")]
    TooManyThreads { requested: usize, available: usize },

    #[error("memory size {bytes} exceeds main memory capacity {capacity}")]
    BeyondMainMemory { bytes: u64, capacity: u64 },

    #[error("machine profile {path}: {message}")]
    Profile { path: PathBuf, message: String },

    #[error("no machine profile at {0}; run `adagraph calibrate` first")]
    MissingProfile(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
