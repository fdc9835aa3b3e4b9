use super::CryptoError;
use hmac::{Hmac, Mac};
use sha2::Sha256;
use std::fmt;
use std::ops::BitXor;

pub const MAC_BYTES: usize = 16;

/// Leftmost 128 bits of HMAC-SHA256. Tags aggregate by XOR.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MacTag(pub [u8; MAC_BYTES]);

impl MacTag {
    pub const ZERO: MacTag = MacTag([0u8; MAC_BYTES]);

    pub fn as_bytes(&self) -> &[u8; MAC_BYTES] {
        &self.0
    }

    pub fn xor_fold<'a, I: IntoIterator<Item = &'a MacTag>>(tags: I) -> MacTag {
        tags.into_iter().fold(MacTag::ZERO, |acc, t| acc ^ *t)
    }
}

impl BitXor for MacTag {
    type Output = MacTag;

    fn bitxor(self, rhs: MacTag) -> MacTag {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o ^= r;
        }
        MacTag(out)
    }
}

impl fmt::Debug for MacTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacTag(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// Full 32-byte HMAC-SHA256 output.
pub fn hmac_full(key: &[u8], msg: &[u8]) -> Result<[u8; 32], CryptoError> {
    if key.is_empty() {
        return Err(CryptoError::EmptyKey);
    }
    let mut mac = Hmac::<Sha256>::new_from_slice(key).map_err(|_| CryptoError::EmptyKey)?;
    mac.update(msg);
    Ok(mac.finalize().into_bytes().into())
}

pub fn hmac_tag(key: &[u8], msg: &[u8]) -> Result<MacTag, CryptoError> {
    let full = hmac_full(key, msg)?;
    let mut tag = [0u8; MAC_BYTES];
    tag.copy_from_slice(&full[..MAC_BYTES]);
    Ok(MacTag(tag))
}

#[cfg(test)]
pub(crate) mod reference {
    //! Textbook HMAC (ipad/opad construction) over raw SHA-256, kept apart
    //! from the production path so the two can check each other.
    use sha2::{Digest, Sha256};

    pub fn hmac_sha256(key: &[u8], msg: &[u8]) -> [u8; 32] {
        const BLOCK: usize = 64;
        let mut k = [0u8; BLOCK];
        if key.len() > BLOCK {
            k[..32].copy_from_slice(&Sha256::digest(key));
        } else {
            k[..key.len()].copy_from_slice(key);
        }
        let mut inner = Sha256::new();
        inner.update(k.map(|b| b ^ 0x36));
        inner.update(msg);
        let inner = inner.finalize();
        let mut outer = Sha256::new();
        outer.update(k.map(|b| b ^ 0x5c));
        outer.update(inner);
        outer.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unhex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    #[test]
    fn rfc4231_vectors() {
        let t1 = hmac_full(&[0x0b; 20], b"Hi There").unwrap();
        assert_eq!(
            t1.to_vec(),
            unhex("b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7")
        );
        let t2 = hmac_full(b"Jefe", b"what do ya want for nothing?").unwrap();
        assert_eq!(
            t2.to_vec(),
            unhex("5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843")
        );
        assert_eq!(reference::hmac_sha256(b"Jefe", b"what do ya want for nothing?"), t2);
    }

    #[test]
    fn tag_is_leftmost_sixteen_bytes() {
        let full = hmac_full(b"k", b"m").unwrap();
        assert_eq!(hmac_tag(b"k", b"m").unwrap().0, full[..16]);
    }

    #[test]
    fn empty_key_is_a_configuration_error() {
        assert_eq!(hmac_tag(&[], b"m"), Err(CryptoError::EmptyKey));
    }

    #[test]
    fn xor_fold_is_self_inverse() {
        let a = hmac_tag(b"a", b"1").unwrap();
        let b = hmac_tag(b"b", b"2").unwrap();
        assert_eq!(MacTag::xor_fold([&a, &b, &b]), a);
        assert_eq!(a ^ a, MacTag::ZERO);
    }

    proptest! {
        #[test]
        fn matches_reference_implementation(
            key in proptest::collection::vec(any::<u8>(), 1..200),
            msg in proptest::collection::vec(any::<u8>(), 0..300),
        ) {
            prop_assert_eq!(hmac_full(&key, &msg).unwrap(), reference::hmac_sha256(&key, &msg));
        }

        #[test]
        fn single_bit_flip_changes_tag(
            key in proptest::collection::vec(any::<u8>(), 1..64),
            msg in proptest::collection::vec(any::<u8>(), 1..64),
            bit in any::<usize>(),
        ) {
            let mut flipped = msg.clone();
            let bit = bit % (msg.len() * 8);
            flipped[bit / 8] ^= 1 << (bit % 8);
            let expected = reference::hmac_sha256(&key, &flipped);
            let tag = hmac_tag(&key, &flipped).unwrap();
            prop_assert_eq!(&tag.0[..], &expected[..16]);
            prop_assert_ne!(tag, hmac_tag(&key, &msg).unwrap());
        }
    }
}
