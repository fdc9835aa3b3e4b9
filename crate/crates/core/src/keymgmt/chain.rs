use super::{KeyError, LongTermSeedKey};
use crate::crypto::{h1, h1_concat, Digest, GroupBackend};
use crate::node::Timestamp;

/// Forward and backward hash chains for one epoch and the short-term keys
/// `K^(s)[t] = H1(F[t] ⊕ B[t])` derived from them.
///
/// Index 0 of each vector holds element 1 of the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyChainEpoch {
    pub ts: Timestamp,
    pub forward: Vec<Digest>,
    pub backward: Vec<Digest>,
    keys: Vec<Digest>,
}

impl KeyChainEpoch {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Short-term key for slot `t` in `1..=T`.
    pub fn short_term_key(&self, t: usize) -> Option<&Digest> {
        t.checked_sub(1).and_then(|i| self.keys.get(i))
    }

    /// Recomputes `K^(s)[t]` from the stored chain elements.
    pub fn key_from_chains(forward: &Digest, backward: &Digest) -> Digest {
        let mut x = [0u8; 32];
        for (o, (f, b)) in x.iter_mut().zip(forward.iter().zip(backward)) {
            *o = f ^ b;
        }
        h1(&x)
    }
}

/// `F[1] = H1(K,TS,1)`, `F[a] = H1(F[a-1])`; `B[T] = H1(K,TS,2)`,
/// `B[b] = H1(B[b+1])`.
pub fn derive_chains<B: GroupBackend>(
    backend: &B,
    seed: &LongTermSeedKey<B>,
    ts: Timestamp,
    len: usize,
) -> Result<KeyChainEpoch, KeyError> {
    if len == 0 {
        return Err(KeyError::Parameter("key chain length must be at least 1".into()));
    }
    let k = seed.key_bytes(backend);
    let ts_bytes = ts.to_be_bytes();
    let mut forward = Vec::with_capacity(len);
    forward.push(h1_concat(&[&k, &ts_bytes, &[1]]));
    for a in 1..len {
        forward.push(h1(&forward[a - 1]));
    }
    let mut backward = vec![[0u8; 32]; len];
    backward[len - 1] = h1_concat(&[&k, &ts_bytes, &[2]]);
    for b in (0..len - 1).rev() {
        backward[b] = h1(&backward[b + 1]);
    }
    let keys = forward
        .iter()
        .zip(&backward)
        .map(|(f, b)| KeyChainEpoch::key_from_chains(f, b))
        .collect();
    Ok(KeyChainEpoch {
        ts,
        forward,
        backward,
        keys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{MockBackend, MockG1};
    use crate::field::Scalar;

    fn seed() -> (MockBackend, LongTermSeedKey<MockBackend>) {
        (
            MockBackend::compat(),
            LongTermSeedKey {
                key: MockG1(Scalar(987654321)),
                epoch: 0,
            },
        )
    }

    #[test]
    fn single_slot_definition() {
        let (b, k) = seed();
        let e = derive_chains(&b, &k, 86400, 1).unwrap();
        let kb = b.encode_g1(&k.key);
        let f1 = h1_concat(&[&kb, &86400u32.to_be_bytes(), &[1]]);
        let b1 = h1_concat(&[&kb, &86400u32.to_be_bytes(), &[2]]);
        let mut x = [0u8; 32];
        for i in 0..32 {
            x[i] = f1[i] ^ b1[i];
        }
        assert_eq!(e.short_term_key(1), Some(&h1(&x)));
        assert_eq!(e.short_term_key(0), None);
        assert_eq!(e.short_term_key(2), None);
    }

    #[test]
    fn zero_length_is_rejected() {
        let (b, k) = seed();
        assert!(matches!(derive_chains(&b, &k, 0, 0), Err(KeyError::Parameter(_))));
    }

    #[test]
    fn chains_run_in_opposite_directions() {
        let (b, k) = seed();
        let e = derive_chains(&b, &k, 5, 10).unwrap();
        for t in 1..10 {
            assert_eq!(e.forward[t], h1(&e.forward[t - 1]));
            assert_eq!(e.backward[t - 1], h1(&e.backward[t]));
        }
        // Knowing F[t], B[t] lets one walk F forward and B backward only:
        // later keys need later F (reachable) but also later B (preimages).
        let t = 4;
        let (f, bk) = (e.forward[t], e.backward[t]);
        assert_eq!(h1(&f), e.forward[t + 1]);
        assert_eq!(h1(&bk), e.backward[t - 1]);
        assert_ne!(h1(&bk), e.backward[t + 1]);
    }

    #[test]
    fn stored_chains_reproduce_keys() {
        let (b, k) = seed();
        let e = derive_chains(&b, &k, 5, 96).unwrap();
        let again = derive_chains(&b, &k.clone(), 5, 96).unwrap();
        assert_eq!(e, again);
        for t in 1..=96 {
            let from_chain = KeyChainEpoch::key_from_chains(&e.forward[t - 1], &e.backward[t - 1]);
            assert_eq!(Some(&from_chain), e.short_term_key(t));
        }
    }
}
