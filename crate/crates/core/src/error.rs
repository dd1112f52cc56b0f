use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("zero-forcing Gram matrix is singular (condition number {cond:.3e})")]
    SingularGram { cond: f64 },
    #[error("zero-forcing needs M > |active pilots|, got M = {antennas} with {active} active")]
    TooFewAntennas { antennas: usize, active: usize },
    #[error("user {user} is not a non-collided active user")]
    NotDecodable { user: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueueError {
    #[error("success reported for user {user} with an empty queue")]
    SuccessOnEmptyQueue { user: usize },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite {what} at training step {step}: {detail}")]
    NonFinite {
        what: &'static str,
        step: usize,
        detail: String,
    },
    #[error("empty mini-batch")]
    EmptyBatch,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint does not fit this network: {0}")]
    Mismatch(String),
}

/// Top-level error for simulation runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
