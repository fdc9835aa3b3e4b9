//! Deterministic discrete-event simulation of aggregation rounds on grid
//! networks.
//!
//! A round is driven by an event queue in integer nanoseconds. Nodes run
//! the real protocol state machines from `epic-core`; every cryptographic
//! step advances simulated time by its cost-model constant, and every hop
//! goes through a half-duplex radio model with contention-scaled access
//! delay, MSS segmentation and per-segment loss.

pub mod campaign;
pub mod channel;
pub mod sim;
pub mod topology;

pub use campaign::{
    grid, inject_attack, run_campaign, summarize, write_rounds_csv, write_summary_csv, CampaignResult,
    CampaignSummary, Stat,
};
pub use channel::{Channel, ChannelParams, Delivery, SegmentRecord};
pub use sim::{verdict_label, AttackScenario, Metrics, RoundOutcome, SimConfig, Simulation, TraceEvent, TraceKind};
pub use topology::{build_topology, Mode, Position, Topology};

use epic_core::protocol::ProtocolError;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetsimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("invalid attack scenario: {0}")]
    Attack(String),
    #[error("round ended without a utility verdict")]
    Stalled,
    #[error("export failed: {0}")]
    Export(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}
