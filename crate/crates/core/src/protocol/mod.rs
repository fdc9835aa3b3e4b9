//! Per-round protocol state machines: report generation, two-phase
//! verify/aggregate at relaying nodes, utility verification and recovery,
//! and bottom-up attacker identification.

mod attack;
mod node;
mod report;
mod system;
mod tree;
mod utility;

pub use attack::{Attack, AttackKind};
pub use node::{isolate, verify_children, ChildReport, NodeState, Phase1Outcome, Rejection};
pub use report::{fixed_bytes, ChildEvidence, Report, REPORT_FIXED_BYTES};
pub use system::{
    record_rejections, record_verdict, Detection, DetectionPoint, NodeStep, RoundCtx, RoundReport, System, SystemConfig,
};
pub use tree::AggregationTree;
pub use utility::{identify_attacker, EvidenceSource, Recovery, UtilityState, UtilityVerdict};

use crate::billing::BillingError;
use crate::crypto::CryptoError;
use crate::keymgmt::KeyError;
use crate::node::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("reading {reading} outside [0, {max}]")]
    ReadingRange { reading: u64, max: u64 },
    #[error("{0} has no reading for this round")]
    MissingReading(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("recovered aggregate {value} exceeds bound {bound}")]
    Consistency { value: u128, bound: u128 },
    #[error("no evidence available for {0}")]
    MissingEvidence(NodeId),
    #[error("every node passed identification; evidence is inconsistent")]
    InconsistentEvidence,
    #[error("{0} holds no key shared with the utility")]
    NoUtilityKey(NodeId),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Billing(#[from] BillingError),
}
