use crate::crypto::{CryptoError, GroupBackend, MacTag, Signature, MAC_BYTES};
use crate::field::Scalar;
use crate::node::Timestamp;

const MASKED_BYTES: usize = 16;
const TS_BYTES: usize = 4;

/// Bytes of a report excluding its hash list.
pub fn fixed_bytes<B: GroupBackend>() -> usize {
    MASKED_BYTES + TS_BYTES + MAC_BYTES + B::G1_BYTES
}

/// Fixed part of a report under the compat encodings.
pub const REPORT_FIXED_BYTES: usize = MASKED_BYTES + TS_BYTES + MAC_BYTES + 64;

/// A masked (aggregate) reading with its hash list, aggregated MAC and the
/// sender's signature over `(masked, mac, ts)`. A leaf report is the case of
/// a single hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report<B: GroupBackend> {
    pub masked: Scalar,
    pub ts: Timestamp,
    pub hashes: Vec<B::HashElem>,
    pub mac: MacTag,
    pub sig: Signature<B>,
}

impl<B: GroupBackend> Report<B> {
    pub fn signed_bytes(masked: Scalar, mac: &MacTag, ts: Timestamp) -> Vec<u8> {
        let mut out = Vec::with_capacity(MASKED_BYTES + MAC_BYTES + TS_BYTES);
        out.extend(masked.to_be_bytes());
        out.extend(mac.as_bytes());
        out.extend(ts.to_be_bytes());
        out
    }

    pub fn message(&self) -> Vec<u8> {
        Self::signed_bytes(self.masked, &self.mac, self.ts)
    }

    pub fn evidence(&self) -> ChildEvidence<B> {
        ChildEvidence {
            masked: self.masked,
            mac: self.mac,
            ts: self.ts,
            sig: self.sig.clone(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        fixed_bytes::<B>() + self.hashes.len() * B::HASH_ELEM_BYTES
    }

    /// `masked ‖ TS ‖ h_1 … h_ℓ ‖ MAC ‖ σ`, big-endian.
    pub fn encode(&self, backend: &B) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend(self.masked.to_be_bytes());
        out.extend(self.ts.to_be_bytes());
        for h in &self.hashes {
            out.extend(backend.encode_hash(h));
        }
        out.extend(self.mac.as_bytes());
        out.extend(self.sig.encode(backend));
        out
    }

    pub fn decode(backend: &B, bytes: &[u8]) -> Result<Self, CryptoError> {
        let fixed = fixed_bytes::<B>();
        let bad = |reason: String| CryptoError::Decode { what: "report", reason };
        if bytes.len() < fixed + B::HASH_ELEM_BYTES || (bytes.len() - fixed) % B::HASH_ELEM_BYTES != 0 {
            return Err(bad(format!("length {} is not {fixed} + 20k with k >= 1", bytes.len())));
        }
        let count = (bytes.len() - fixed) / B::HASH_ELEM_BYTES;
        let masked = Scalar::from_be_bytes(bytes[..MASKED_BYTES].try_into().expect("16 bytes"));
        if !backend.params().p.contains(masked) {
            return Err(bad("masked reading not reduced".into()));
        }
        let mut pos = MASKED_BYTES;
        let ts = Timestamp::from_be_bytes(bytes[pos..pos + TS_BYTES].try_into().expect("4 bytes"));
        pos += TS_BYTES;
        let mut hashes = Vec::with_capacity(count);
        for _ in 0..count {
            hashes.push(backend.decode_hash(&bytes[pos..pos + B::HASH_ELEM_BYTES])?);
            pos += B::HASH_ELEM_BYTES;
        }
        let mac = MacTag(bytes[pos..pos + MAC_BYTES].try_into().expect("16 bytes"));
        pos += MAC_BYTES;
        let sig = Signature::decode(backend, &bytes[pos..])?;
        Ok(Report {
            masked,
            ts,
            hashes,
            mac,
            sig,
        })
    }
}

/// The `(M_c, MAC_c, TS, σ_c)` tuple a parent keeps for each child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChildEvidence<B: GroupBackend> {
    pub masked: Scalar,
    pub mac: MacTag,
    pub ts: Timestamp,
    pub sig: Signature<B>,
}

impl<B: GroupBackend> ChildEvidence<B> {
    pub fn message(&self) -> Vec<u8> {
        Report::<B>::signed_bytes(self.masked, &self.mac, self.ts)
    }
}
