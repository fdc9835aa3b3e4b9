use super::{CryptoError, GroupBackend};
use crate::field::Scalar;
use sha2::{Digest as _, Sha256};

/// Output of the plain hash `H1` (SHA-256).
pub type Digest = [u8; 32];

pub fn h1(data: &[u8]) -> Digest {
    Sha256::digest(data).into()
}

/// `H1` over the concatenation of several fields.
pub fn h1_concat(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// `H(m) = Σ m_i·P_i` over the hash group.
pub fn homomorphic_hash<B: GroupBackend>(
    backend: &B,
    m: &[Scalar],
) -> Result<B::HashElem, CryptoError> {
    let params = backend.params();
    if m.len() != params.d {
        return Err(CryptoError::Dimension {
            expected: params.d,
            got: m.len(),
        });
    }
    let mut acc = backend.hash_identity();
    for (index, (mi, gen)) in m.iter().zip(backend.hash_generators()).enumerate() {
        if !params.p.contains(*mi) {
            return Err(CryptoError::Unreduced { index });
        }
        acc = backend.hash_add(&acc, &backend.hash_mul(gen, *mi));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::MockBackend;
    use proptest::prelude::*;

    #[test]
    fn zero_vector_hashes_to_identity() {
        let b = MockBackend::with_dimension(3);
        let h = homomorphic_hash(&b, &[Scalar::ZERO; 3]).unwrap();
        assert_eq!(h, b.hash_identity());
    }

    #[test]
    fn scalar_hash_is_multiple_of_first_generator() {
        let b = MockBackend::compat();
        let h = homomorphic_hash(&b, &[Scalar(3)]).unwrap();
        assert_eq!(h, b.hash_mul(&b.hash_generators()[0], Scalar(3)));
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let b = MockBackend::with_dimension(2);
        assert_eq!(
            homomorphic_hash(&b, &[Scalar(1)]),
            Err(CryptoError::Dimension { expected: 2, got: 1 })
        );
    }

    #[test]
    fn unreduced_component_is_rejected() {
        let b = MockBackend::compat();
        let p = b.params().p.modulus();
        assert_eq!(
            homomorphic_hash(&b, &[Scalar(p)]),
            Err(CryptoError::Unreduced { index: 0 })
        );
    }

    #[test]
    fn sha256_known_answer() {
        // FIPS 180-2 "abc"
        assert_eq!(
            h1(b"abc")[..4],
            [0xba, 0x78, 0x16, 0xbf],
        );
    }

    proptest! {
        #[test]
        fn k_term_sums_are_homomorphic(
            vecs in proptest::collection::vec(proptest::collection::vec(any::<u128>(), 3), 1..64)
        ) {
            let b = MockBackend::with_dimension(3);
            let p = b.params().p;
            let vecs: Vec<Vec<Scalar>> = vecs
                .into_iter()
                .map(|v| v.into_iter().map(|x| p.reduce(x)).collect())
                .collect();
            let hashes: Vec<_> = vecs.iter().map(|v| homomorphic_hash(&b, v).unwrap()).collect();
            let mut sum = vec![Scalar::ZERO; 3];
            for v in &vecs {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s = p.add(*s, *x);
                }
            }
            prop_assert_eq!(b.hash_sum(&hashes), homomorphic_hash(&b, &sum).unwrap());
        }
    }
}
