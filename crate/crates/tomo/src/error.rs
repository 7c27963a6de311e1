//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed topology document, CSV file, or CLI input. The message
    /// carries enough location context (node name, link index, line number)
    /// to find the offending entry.
    #[error("parse: {0}")]
    Parse(String),

    /// Structurally valid input that violates a model constraint
    /// (disconnected fabric, missing access link, non-positive capacity, ...).
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("unknown scenario '{0}' (run `tomo scenarios` for the list)")]
    UnknownScenario(String),

    /// Clustering needs at least one positive-weight edge.
    #[error("measurement graph has no positive-weight edges")]
    ZeroWeightGraph,

    /// Two per-node structures (partitions, measurement graphs, ledgers)
    /// were combined but describe different node sets.
    #[error("node count mismatch: {left} vs {right}")]
    NodeCountMismatch { left: usize, right: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn topology(msg: impl Into<String>) -> Self {
        Error::Topology(msg.into())
    }
}
