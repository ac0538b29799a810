use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("model validation: {0}")]
    Model(String),
    #[error("assignment has length {actual}, model has {expected} variables")]
    AssignmentLength { expected: usize, actual: usize },
    #[error("{what} has size {size}, above the enumeration guard of {limit}")]
    SizeGuard { what: &'static str, size: usize, limit: usize },
    #[error("invalid workload: {0}")]
    Workload(String),
    #[error("unknown image id {0}")]
    UnknownImage(u32),
    #[error("invalid cluster: {0}")]
    Cluster(String),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("seed schedule is infeasible: {0}")]
    InfeasibleSeed(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{}: {msg}", path.display())]
    Io { path: PathBuf, msg: String },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
