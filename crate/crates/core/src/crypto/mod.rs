//! Cryptographic primitives routed through a pluggable [`GroupBackend`].
//!
//! The protocol only ever touches group elements through the backend trait,
//! so a production pairing library can replace [`MockBackend`] without any
//! change to the key-management, protocol or billing code.

mod backend;
mod hash;
mod mac;
mod mock;
mod sig;

pub use backend::{GroupBackend, GroupParams};
pub use hash::{h1, h1_concat, homomorphic_hash, Digest};
pub use mac::{hmac_full, hmac_tag, MacTag, MAC_BYTES};
#[cfg(test)]
pub(crate) use mac::reference as mac_reference_for_tests;
pub use mock::{MockBackend, MockG1, MockGt, MockHashElem};
pub use sig::{bls_batch_verify, bls_sign, bls_verify, Signature, SignKeyPair};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("malformed {what} encoding: {reason}")]
    Decode { what: &'static str, reason: String },
    #[error("homomorphic hash expects {expected} components, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("component {index} is not reduced modulo the hash-group order")]
    Unreduced { index: usize },
    #[error("empty MAC key")]
    EmptyKey,
    #[error("signing key must be nonzero")]
    ZeroKey,
    #[error("invalid group parameters: {0}")]
    Params(String),
}
