use std::path::PathBuf;

use thiserror::Error;

use crate::model::{NodeId, NodeKind};

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("node {node} is a {actual:?}, expected {expected}")]
    KindMismatch {
        node: NodeId,
        actual: NodeKind,
        expected: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("link {tx} -> {rx} is below receiver sensitivity ({rssi_dbm:.3} dBm < {sensitivity_dbm} dBm)")]
    BelowSensitivity {
        tx: NodeId,
        rx: NodeId,
        rssi_dbm: f64,
        sensitivity_dbm: f64,
    },

    #[error("no MCS table configured for {0}")]
    MissingMcsTable(String),

    #[error("unknown test id {0:?}")]
    UnknownTest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
