use serde::{Deserialize, Serialize};
use std::fmt;

/// Network-wide node identifier. Meters are numbered from 1; the gateway and
/// the utility use reserved values.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const GATEWAY: NodeId = NodeId(0);
    pub const UTILITY: NodeId = NodeId(u32::MAX);

    pub fn meter(i: u32) -> NodeId {
        assert!(i != 0 && i != u32::MAX, "reserved node id");
        NodeId(i)
    }

    pub fn is_meter(self) -> bool {
        self != Self::GATEWAY && self != Self::UTILITY
    }

    pub fn to_be_bytes(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::GATEWAY => write!(f, "gw"),
            Self::UTILITY => write!(f, "u"),
            NodeId(i) => write!(f, "sm{i}"),
        }
    }
}

/// Seconds of simulated time.
pub type Timestamp = u32;

/// `|now - ts| <= window`.
pub fn is_fresh(ts: Timestamp, now: Timestamp, window: u32) -> bool {
    now.abs_diff(ts) <= window
}
