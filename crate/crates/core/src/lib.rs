//! Privacy-preserving, collusion-resistant aggregation of smart-meter
//! readings with end-to-end integrity, attacker identification and
//! dynamic-pricing billing.

pub mod crypto;
pub mod field;
pub mod billing;
pub mod keymgmt;
pub mod node;
pub mod protocol;
pub mod analysis;
