use super::{CryptoError, GroupBackend};
use crate::field::Scalar;
use rand::RngCore;

/// BLS-style signature `σ = x·H2(msg)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature<B: GroupBackend> {
    pub sigma: B::G1,
}

impl<B: GroupBackend> Signature<B> {
    pub fn encode(&self, backend: &B) -> Vec<u8> {
        backend.encode_g1(&self.sigma)
    }

    pub fn decode(backend: &B, bytes: &[u8]) -> Result<Self, CryptoError> {
        Ok(Signature {
            sigma: backend.decode_g1(bytes)?,
        })
    }
}

/// Private scalar `x` and public key `Y = x·P`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignKeyPair<B: GroupBackend> {
    secret: Scalar,
    pub public: B::G1,
}

impl<B: GroupBackend> SignKeyPair<B> {
    pub fn generate<R: RngCore + ?Sized>(backend: &B, rng: &mut R) -> Self {
        let secret = backend.params().q.random_nonzero(rng);
        Self::from_secret(backend, secret).expect("nonzero by construction")
    }

    pub fn from_secret(backend: &B, secret: Scalar) -> Result<Self, CryptoError> {
        let secret = backend.params().q.reduce(secret.0);
        if secret.is_zero() {
            return Err(CryptoError::ZeroKey);
        }
        let public = backend.g1_mul(&backend.g1_generator(), secret);
        Ok(SignKeyPair { secret, public })
    }

    pub fn secret(&self) -> Scalar {
        self.secret
    }

    pub fn sign(&self, backend: &B, msg: &[u8]) -> Signature<B> {
        bls_sign(backend, self.secret, msg).expect("keypair secret is nonzero")
    }

    /// `Y == x·P`.
    pub fn is_consistent(&self, backend: &B) -> bool {
        backend.g1_mul(&backend.g1_generator(), self.secret) == self.public
    }
}

pub fn bls_sign<B: GroupBackend>(
    backend: &B,
    x: Scalar,
    msg: &[u8],
) -> Result<Signature<B>, CryptoError> {
    if backend.params().q.reduce(x.0).is_zero() {
        return Err(CryptoError::ZeroKey);
    }
    Ok(Signature {
        sigma: backend.g1_mul(&backend.hash_to_g1(msg), x),
    })
}

/// `ê(σ, P) == ê(H2(msg), Y)`.
pub fn bls_verify<B: GroupBackend>(backend: &B, public: &B::G1, msg: &[u8], sig: &Signature<B>) -> bool {
    backend.pairing(&sig.sigma, &backend.g1_generator())
        == backend.pairing(&backend.hash_to_g1(msg), public)
}

/// `ê(Σ σ_c, P) == Π ê(H2(msg_c), Y_c)`. An empty batch verifies vacuously.
pub fn bls_batch_verify<B: GroupBackend>(
    backend: &B,
    items: &[(&B::G1, &[u8], &Signature<B>)],
) -> bool {
    if items.is_empty() {
        return true;
    }
    let sigma_sum = backend.g1_sum(items.iter().map(|(_, _, s)| &s.sigma));
    let lhs = backend.pairing(&sigma_sum, &backend.g1_generator());
    let rhs = items.iter().fold(backend.gt_identity(), |acc, (y, msg, _)| {
        backend.gt_mul(&acc, &backend.pairing(&backend.hash_to_g1(msg), y))
    });
    lhs == rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::MockBackend;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sign_then_verify() {
        let b = MockBackend::compat();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kp = SignKeyPair::generate(&b, &mut rng);
        let other = SignKeyPair::generate(&b, &mut rng);
        let sig = kp.sign(&b, b"hello");
        assert!(bls_verify(&b, &kp.public, b"hello", &sig));
        assert!(!bls_verify(&b, &other.public, b"hello", &sig));
        assert!(!bls_verify(&b, &kp.public, b"hellp", &sig));
    }

    #[test]
    fn zero_key_is_rejected() {
        let b = MockBackend::compat();
        assert_eq!(bls_sign(&b, Scalar::ZERO, b"m"), Err(CryptoError::ZeroKey));
        let q = b.params().q.modulus();
        assert!(SignKeyPair::<MockBackend>::from_secret(&b, Scalar(q)).is_err());
    }

    #[test]
    fn one_bit_mutation_fails_verification() {
        let b = MockBackend::compat();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let kp = SignKeyPair::generate(&b, &mut rng);
            let mut msg = vec![0u8; rng.gen_range(1..64)];
            rng.fill(&mut msg[..]);
            let sig = kp.sign(&b, &msg);
            let bit = rng.gen_range(0..msg.len() * 8);
            msg[bit / 8] ^= 1 << (bit % 8);
            assert!(!bls_verify(&b, &kp.public, &msg, &sig));
        }
    }

    #[test]
    fn batch_of_three_with_one_forgery() {
        let b = MockBackend::compat();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let keys: Vec<_> = (0..3).map(|_| SignKeyPair::generate(&b, &mut rng)).collect();
        let msgs: [&[u8]; 3] = [b"a", b"b", b"c"];
        let mut sigs: Vec<_> = keys.iter().zip(msgs).map(|(k, m)| k.sign(&b, m)).collect();
        let items: Vec<_> = (0..3).map(|i| (&keys[i].public, msgs[i], &sigs[i])).collect();
        assert!(bls_batch_verify(&b, &items));
        sigs[1] = keys[0].sign(&b, msgs[1]);
        let items: Vec<_> = (0..3).map(|i| (&keys[i].public, msgs[i], &sigs[i])).collect();
        assert!(!bls_batch_verify(&b, &items));
    }
}
