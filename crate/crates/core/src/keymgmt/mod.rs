//! Proxy selection, long-term seed-key agreement, short-term key chains and
//! the derivation of one-time masks.

mod chain;
mod exchange;
mod mask;
mod proxy;

pub use chain::{derive_chains, KeyChainEpoch};
pub use exchange::{
    ke_confirm, ke_finalize, ke_initiate, ke_respond, Certificate, KConf, KERes, KEReq,
    LongTermSeedKey, NodeIdentity, PendingExchange, TrustedAuthority, CERT_BYTES, KCONF_BYTES,
    KERES_BYTES, KEREQ_BYTES,
};
pub use mask::{day_epoch_ts, derive_mask, mask_hmac_input, MaskSchedule, PairKey};
pub use proxy::{select_proxies, ProxyAssignment, ProxyGraph, ProxyPolicy};

use crate::crypto::CryptoError;
use crate::node::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeyError {
    #[error("need {needed} proxy candidates but only {available} are eligible")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("message timestamp {ts} outside freshness window at {now}")]
    ReplayRejected { ts: u32, now: u32 },
    #[error("authentication failed: {0}")]
    AuthFailed(&'static str),
    #[error("key confirmation digest mismatch")]
    KeyConfirmationFailed,
    #[error("no short-term key for peer {peer} on day {day}")]
    KeyNotProvisioned { peer: NodeId, day: u32 },
    #[error("mask for day {day} slot {slot} already consumed")]
    OneTimeMaskViolation { day: u32, slot: u16 },
    #[error("billing period {period} closed after {completed} of {required} prior slots")]
    Sequencing {
        period: u64,
        completed: u32,
        required: u32,
    },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
