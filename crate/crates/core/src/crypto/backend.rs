use super::CryptoError;
use crate::field::{PrimeField, Scalar};
use std::fmt::Debug;
use std::hash::Hash;

/// Public system parameters: the pairing-group order `q`, the hash-group
/// order `p`, and the homomorphic-hash dimension `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupParams {
    pub q: PrimeField,
    pub p: PrimeField,
    pub d: usize,
    /// Labels for `P` followed by `P1..Pd`.
    pub generator_ids: Vec<String>,
}

impl GroupParams {
    pub fn new(q: u128, p: u128, d: usize) -> Result<Self, CryptoError> {
        let q = PrimeField::new(q).map_err(|e| CryptoError::Params(e.to_string()))?;
        let p = PrimeField::new(p).map_err(|e| CryptoError::Params(e.to_string()))?;
        if d == 0 {
            return Err(CryptoError::Params("dimension d must be at least 1".into()));
        }
        let mut generator_ids = vec!["P".to_string()];
        generator_ids.extend((1..=d).map(|i| format!("P{i}")));
        Ok(GroupParams {
            q,
            p,
            d,
            generator_ids,
        })
    }
}

/// Cyclic groups `G1` (with a symmetric pairing into `GT`) and the hash group
/// `G` with its `d` generators.
///
/// `G1` and `G` are written additively, `GT` multiplicatively. Every element
/// type has a canonical fixed-width encoding; `decode(encode(x)) == x`.
pub trait GroupBackend: Clone + Debug + PartialEq + Send + Sync + 'static {
    type G1: Clone + Debug + PartialEq + Eq + Hash + Send + Sync;
    type Gt: Clone + Debug + PartialEq + Eq + Send + Sync;
    type HashElem: Clone + Debug + PartialEq + Eq + Hash + Send + Sync;

    const G1_BYTES: usize;
    const GT_BYTES: usize;
    const HASH_ELEM_BYTES: usize;

    fn params(&self) -> &GroupParams;

    fn g1_generator(&self) -> Self::G1;
    fn g1_identity(&self) -> Self::G1;
    fn g1_add(&self, a: &Self::G1, b: &Self::G1) -> Self::G1;
    fn g1_neg(&self, a: &Self::G1) -> Self::G1;
    fn g1_mul(&self, a: &Self::G1, k: Scalar) -> Self::G1;
    /// `H2 : {0,1}* -> G1`.
    fn hash_to_g1(&self, msg: &[u8]) -> Self::G1;

    fn pairing(&self, a: &Self::G1, b: &Self::G1) -> Self::Gt;
    fn gt_identity(&self) -> Self::Gt;
    fn gt_mul(&self, a: &Self::Gt, b: &Self::Gt) -> Self::Gt;
    fn gt_pow(&self, a: &Self::Gt, k: Scalar) -> Self::Gt;

    fn hash_identity(&self) -> Self::HashElem;
    fn hash_add(&self, a: &Self::HashElem, b: &Self::HashElem) -> Self::HashElem;
    fn hash_neg(&self, a: &Self::HashElem) -> Self::HashElem;
    fn hash_mul(&self, a: &Self::HashElem, k: Scalar) -> Self::HashElem;
    /// `P1..Pd`.
    fn hash_generators(&self) -> &[Self::HashElem];

    fn encode_g1(&self, a: &Self::G1) -> Vec<u8>;
    fn decode_g1(&self, bytes: &[u8]) -> Result<Self::G1, CryptoError>;
    fn encode_gt(&self, a: &Self::Gt) -> Vec<u8>;
    fn decode_gt(&self, bytes: &[u8]) -> Result<Self::Gt, CryptoError>;
    fn encode_hash(&self, a: &Self::HashElem) -> Vec<u8>;
    fn decode_hash(&self, bytes: &[u8]) -> Result<Self::HashElem, CryptoError>;

    fn hash_sub(&self, a: &Self::HashElem, b: &Self::HashElem) -> Self::HashElem {
        self.hash_add(a, &self.hash_neg(b))
    }

    fn hash_sum<'a, I>(&self, items: I) -> Self::HashElem
    where
        I: IntoIterator<Item = &'a Self::HashElem>,
        Self::HashElem: 'a,
    {
        items
            .into_iter()
            .fold(self.hash_identity(), |acc, x| self.hash_add(&acc, x))
    }

    fn g1_sum<'a, I>(&self, items: I) -> Self::G1
    where
        I: IntoIterator<Item = &'a Self::G1>,
        Self::G1: 'a,
    {
        items
            .into_iter()
            .fold(self.g1_identity(), |acc, x| self.g1_add(&acc, x))
    }
}
