//! Simulator for multi-AP/Extender home WiFi networks.
//!
//! Compares the default strongest-RSSI association rule with a
//! channel-load-aware selection driven by simulated 802.11k/v exchanges.

pub mod config;
pub mod error;
pub mod model;
pub mod perf;
pub mod protocol;
pub mod radio;
pub mod runner;
pub mod scenarios;
pub mod selection;

pub use config::Config;
pub use error::{Error, Result};
pub use model::{
    Band, BackhaulLink, ChannelId, ExternalLoad, Node, NodeId, NodeKind, Position, RadioConfig,
    Topology, TrafficProfile, Violation,
};
pub use perf::{evaluate, Environment, MacOverheads, MacParams, PerfReport};
pub use radio::{max_range_m, path_loss_db, rssi_dbm, McsTable, McsTables, PropagationParams, RadioEnv};
pub use selection::{
    rank_candidates, reassociation_pass, score, weighted_rssi, CandidateList, CandidateScore,
    Mechanism, SelectionConfig,
};
