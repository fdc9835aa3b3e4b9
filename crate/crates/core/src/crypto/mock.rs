//! Exponent-tracking test backend.
//!
//! A `G1` element `a` stands for `a·P`, a `GT` element `e` for `ê(P,P)^e`, and
//! a hash-group element `h` for `h·g` with `g` an implicit generator of `G`.
//! Every algebraic identity the protocol checks holds exactly, but discrete
//! logarithms are trivial: this backend is for testing and simulation only.

use super::backend::{GroupBackend, GroupParams};
use super::hash::h1_concat;
use super::CryptoError;
use crate::field::Scalar;

/// Order of `G1`/`GT` used in compat mode.
pub const COMPAT_Q: u128 = (1u128 << 126) - 137;
/// Order of the hash group `G` used in compat mode (the Mersenne prime 2^127 - 1).
pub const COMPAT_P: u128 = (1u128 << 127) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MockG1(pub Scalar);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MockGt(pub Scalar);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MockHashElem(pub Scalar);

#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    params: GroupParams,
    generators: Vec<MockHashElem>,
}

impl MockBackend {
    pub fn new(params: GroupParams) -> Self {
        let p = params.p;
        let mut generators: Vec<MockHashElem> = Vec::with_capacity(params.d);
        let mut counter = 0u32;
        while generators.len() < params.d {
            let digest = h1_concat(&[b"mock-hash-generator", &counter.to_be_bytes()]);
            counter += 1;
            let g = p.reduce_bytes(&digest);
            if g.is_zero() || generators.iter().any(|x| x.0 == g) {
                continue;
            }
            generators.push(MockHashElem(g));
        }
        MockBackend { params, generators }
    }

    /// Compat-mode parameters with `d = 1`.
    pub fn compat() -> Self {
        Self::with_dimension(1)
    }

    pub fn with_dimension(d: usize) -> Self {
        let params = GroupParams::new(COMPAT_Q, COMPAT_P, d).expect("compat primes are valid");
        Self::new(params)
    }

    /// Exponent of a `GT` element with respect to `ê(P,P)`.
    pub fn gt_exponent(gt: &MockGt) -> Scalar {
        gt.0
    }

    fn encode_scalar(s: Scalar, width: usize) -> Vec<u8> {
        let mut out = vec![0u8; width];
        out[width - 16..].copy_from_slice(&s.to_be_bytes());
        out
    }

    fn decode_scalar(
        bytes: &[u8],
        width: usize,
        modulus: u128,
        what: &'static str,
    ) -> Result<Scalar, CryptoError> {
        if bytes.len() != width {
            return Err(CryptoError::Decode {
                what,
                reason: format!("expected {width} bytes, got {}", bytes.len()),
            });
        }
        if bytes[..width - 16].iter().any(|&b| b != 0) {
            return Err(CryptoError::Decode {
                what,
                reason: "non-canonical padding".into(),
            });
        }
        let mut buf = [0u8; 16];
        buf.copy_from_slice(&bytes[width - 16..]);
        let v = u128::from_be_bytes(buf);
        if v >= modulus {
            return Err(CryptoError::Decode {
                what,
                reason: "value not reduced".into(),
            });
        }
        Ok(Scalar(v))
    }
}

impl GroupBackend for MockBackend {
    type G1 = MockG1;
    type Gt = MockGt;
    type HashElem = MockHashElem;

    const G1_BYTES: usize = 64;
    const GT_BYTES: usize = 128;
    const HASH_ELEM_BYTES: usize = 20;

    fn params(&self) -> &GroupParams {
        &self.params
    }

    fn g1_generator(&self) -> MockG1 {
        MockG1(Scalar::ONE)
    }

    fn g1_identity(&self) -> MockG1 {
        MockG1(Scalar::ZERO)
    }

    fn g1_add(&self, a: &MockG1, b: &MockG1) -> MockG1 {
        MockG1(self.params.q.add(a.0, b.0))
    }

    fn g1_neg(&self, a: &MockG1) -> MockG1 {
        MockG1(self.params.q.neg(a.0))
    }

    fn g1_mul(&self, a: &MockG1, k: Scalar) -> MockG1 {
        MockG1(self.params.q.mul(a.0, self.params.q.reduce(k.0)))
    }

    fn hash_to_g1(&self, msg: &[u8]) -> MockG1 {
        MockG1(self.params.q.reduce_bytes(&h1_concat(&[msg])))
    }

    fn pairing(&self, a: &MockG1, b: &MockG1) -> MockGt {
        MockGt(self.params.q.mul(a.0, b.0))
    }

    fn gt_identity(&self) -> MockGt {
        MockGt(Scalar::ZERO)
    }

    fn gt_mul(&self, a: &MockGt, b: &MockGt) -> MockGt {
        MockGt(self.params.q.add(a.0, b.0))
    }

    fn gt_pow(&self, a: &MockGt, k: Scalar) -> MockGt {
        MockGt(self.params.q.mul(a.0, self.params.q.reduce(k.0)))
    }

    fn hash_identity(&self) -> MockHashElem {
        MockHashElem(Scalar::ZERO)
    }

    fn hash_add(&self, a: &MockHashElem, b: &MockHashElem) -> MockHashElem {
        MockHashElem(self.params.p.add(a.0, b.0))
    }

    fn hash_neg(&self, a: &MockHashElem) -> MockHashElem {
        MockHashElem(self.params.p.neg(a.0))
    }

    fn hash_mul(&self, a: &MockHashElem, k: Scalar) -> MockHashElem {
        MockHashElem(self.params.p.mul(a.0, self.params.p.reduce(k.0)))
    }

    fn hash_generators(&self) -> &[MockHashElem] {
        &self.generators
    }

    fn encode_g1(&self, a: &MockG1) -> Vec<u8> {
        Self::encode_scalar(a.0, Self::G1_BYTES)
    }

    fn decode_g1(&self, bytes: &[u8]) -> Result<MockG1, CryptoError> {
        Self::decode_scalar(bytes, Self::G1_BYTES, self.params.q.modulus(), "G1").map(MockG1)
    }

    fn encode_gt(&self, a: &MockGt) -> Vec<u8> {
        Self::encode_scalar(a.0, Self::GT_BYTES)
    }

    fn decode_gt(&self, bytes: &[u8]) -> Result<MockGt, CryptoError> {
        Self::decode_scalar(bytes, Self::GT_BYTES, self.params.q.modulus(), "GT").map(MockGt)
    }

    fn encode_hash(&self, a: &MockHashElem) -> Vec<u8> {
        Self::encode_scalar(a.0, Self::HASH_ELEM_BYTES)
    }

    fn decode_hash(&self, bytes: &[u8]) -> Result<MockHashElem, CryptoError> {
        Self::decode_scalar(bytes, Self::HASH_ELEM_BYTES, self.params.p.modulus(), "hash element")
            .map(MockHashElem)
    }
}
