use super::{derive_chains, KeyChainEpoch, KeyError, LongTermSeedKey};
use crate::billing::{billing_mask, SlotClock};
use crate::crypto::{hmac_full, Digest, GroupBackend};
use crate::field::Scalar;
use crate::node::{NodeId, Timestamp};
use std::collections::{BTreeMap, BTreeSet};

/// Epoch timestamp fed into the key chains for `day`.
pub fn day_epoch_ts(day: u32) -> Timestamp {
    day.wrapping_mul(86_400)
}

/// `encode(Y_i) ‖ encode(Y_j) ‖ day:u32 ‖ t_x:u16`, big-endian.
pub fn mask_hmac_input<B: GroupBackend>(
    backend: &B,
    owner_public: &B::G1,
    proxy_public: &B::G1,
    day: u32,
    slot: u16,
) -> Vec<u8> {
    let mut msg = backend.encode_g1(owner_public);
    msg.extend(backend.encode_g1(proxy_public));
    msg.extend(day.to_be_bytes());
    msg.extend(slot.to_be_bytes());
    msg
}

/// `s_{i,j}^{(t_x)} = HMAC_{K^(s)}(Y_i, Y_j, day, t_x) mod p`.
pub fn derive_mask<B: GroupBackend>(
    backend: &B,
    short_term_key: &Digest,
    owner_public: &B::G1,
    proxy_public: &B::G1,
    day: u32,
    slot: u16,
) -> Result<Scalar, KeyError> {
    let msg = mask_hmac_input(backend, owner_public, proxy_public, day, slot);
    let out = hmac_full(short_term_key, &msg)?;
    Ok(backend.params().p.reduce_bytes(&out))
}

/// A peer in the proxy relation and the seed key shared with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairKey<B: GroupBackend> {
    pub peer: NodeId,
    pub peer_public: B::G1,
    pub seed: LongTermSeedKey<B>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct PeriodState {
    completed: u32,
    sum: Scalar,
}

/// Per-node mask state: pair keys, provisioned daily chains, one-time-use
/// bookkeeping and the running sum that closes each billing period.
///
/// Sign convention: the owner of a pair subtracts the mask, the proxy adds it.
#[derive(Debug, Clone)]
pub struct MaskSchedule<B: GroupBackend> {
    owner: NodeId,
    owner_public: B::G1,
    proxies: Vec<PairKey<B>>,
    selected_by: Vec<PairKey<B>>,
    billing_key: Option<Vec<u8>>,
    clock: SlotClock,
    epochs: BTreeMap<(NodeId, u32), KeyChainEpoch>,
    consumed: BTreeSet<u64>,
    periods: BTreeMap<u64, PeriodState>,
}

impl<B: GroupBackend> MaskSchedule<B> {
    /// `billing_key` is the key shared with the utility; `None` for the
    /// gateway and the utility itself.
    pub fn new(
        owner: NodeId,
        owner_public: B::G1,
        mut proxies: Vec<PairKey<B>>,
        mut selected_by: Vec<PairKey<B>>,
        billing_key: Option<Vec<u8>>,
        clock: SlotClock,
    ) -> Self {
        proxies.sort_by_key(|p| p.peer);
        selected_by.sort_by_key(|p| p.peer);
        MaskSchedule {
            owner,
            owner_public,
            proxies,
            selected_by,
            billing_key,
            clock,
            epochs: BTreeMap::new(),
            consumed: BTreeSet::new(),
            periods: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn clock(&self) -> SlotClock {
        self.clock
    }

    pub fn alpha(&self) -> usize {
        self.proxies.len()
    }

    pub fn beta(&self) -> usize {
        self.selected_by.len()
    }

    pub fn has_masks(&self) -> bool {
        !self.proxies.is_empty() || !self.selected_by.is_empty()
    }

    pub fn proxies(&self) -> &[PairKey<B>] {
        &self.proxies
    }

    pub fn selected_by(&self) -> &[PairKey<B>] {
        &self.selected_by
    }

    /// Derives the daily key chains for every peer.
    pub fn provision_day(&mut self, backend: &B, day: u32) -> Result<(), KeyError> {
        let len = self.clock.slots_per_day as usize;
        for pk in self.proxies.iter().chain(&self.selected_by) {
            if self.epochs.contains_key(&(pk.peer, day)) {
                continue;
            }
            let epoch = derive_chains(backend, &pk.seed, day_epoch_ts(day), len)?;
            self.epochs.insert((pk.peer, day), epoch);
        }
        Ok(())
    }

    /// Drops chains for days before `day`.
    pub fn forget_days_before(&mut self, day: u32) {
        self.epochs.retain(|&(_, d), _| d >= day);
    }

    pub fn epoch(&self, peer: NodeId, day: u32) -> Option<&KeyChainEpoch> {
        self.epochs.get(&(peer, day))
    }

    fn short_term_key(&self, peer: NodeId, day: u32, slot: u16) -> Result<&Digest, KeyError> {
        self.epochs
            .get(&(peer, day))
            .and_then(|e| e.short_term_key(slot as usize))
            .ok_or(KeyError::KeyNotProvisioned { peer, day })
    }

    /// `s_{owner,peer}` for a proxy of this node.
    pub fn outgoing_mask(&self, backend: &B, peer: &PairKey<B>, day: u32, slot: u16) -> Result<Scalar, KeyError> {
        let key = self.short_term_key(peer.peer, day, slot)?;
        derive_mask(backend, key, &self.owner_public, &peer.peer_public, day, slot)
    }

    /// `s_{peer,owner}` for a node that selected this one.
    pub fn incoming_mask(&self, backend: &B, peer: &PairKey<B>, day: u32, slot: u16) -> Result<Scalar, KeyError> {
        let key = self.short_term_key(peer.peer, day, slot)?;
        derive_mask(backend, key, &peer.peer_public, &self.owner_public, day, slot)
    }

    /// Regular slot mask `Σ_{selected_by} s_{j,i} − Σ_{proxies} s_{i,j} (mod p)`.
    pub fn net_mask(&self, backend: &B, day: u32, slot: u16) -> Result<Scalar, KeyError> {
        self.clock.global_slot(day, slot)?;
        let p = backend.params().p;
        let mut acc = Scalar::ZERO;
        for pk in &self.selected_by {
            acc = p.add(acc, self.incoming_mask(backend, pk, day, slot)?);
        }
        for pk in &self.proxies {
            acc = p.sub(acc, self.outgoing_mask(backend, pk, day, slot)?);
        }
        Ok(acc)
    }

    /// `s^{(b)}` shared with the utility, or zero for non-meters.
    pub fn billing_mask(&self, backend: &B, period: u64) -> Result<Scalar, KeyError> {
        match &self.billing_key {
            Some(key) => billing_mask(backend, key, period),
            None => Ok(Scalar::ZERO),
        }
    }

    /// `s^{(b)} − Σ_{k<w} net_mask^{(k)}`; requires the period's `w − 1`
    /// earlier slots to have been consumed.
    pub fn closing_mask(&self, backend: &B, period: u64) -> Result<Scalar, KeyError> {
        let required = self.clock.period_len - 1;
        let state = self.periods.get(&period).copied().unwrap_or_default();
        if state.completed != required {
            return Err(KeyError::Sequencing {
                period,
                completed: state.completed,
                required,
            });
        }
        let p = backend.params().p;
        Ok(p.sub(self.billing_mask(backend, period)?, state.sum))
    }

    pub fn is_consumed(&self, day: u32, slot: u16) -> bool {
        self.clock
            .global_slot(day, slot)
            .map(|g| self.consumed.contains(&g))
            .unwrap_or(false)
    }

    /// The mask for this node's report in `(day, slot)`, consumed exactly
    /// once. On the last slot of a billing period this is the closing mask
    /// instead of the regular net mask.
    pub fn take_mask(&mut self, backend: &B, day: u32, slot: u16) -> Result<Scalar, KeyError> {
        let g = self.clock.global_slot(day, slot)?;
        if self.consumed.contains(&g) {
            return Err(KeyError::OneTimeMaskViolation { day, slot });
        }
        let period = self.clock.period_of_global(g);
        let mask = if self.clock.is_closing_global(g) {
            let m = self.closing_mask(backend, period)?;
            self.periods.remove(&period);
            m
        } else {
            let m = self.net_mask(backend, day, slot)?;
            let p = backend.params().p;
            let st = self.periods.entry(period).or_default();
            st.completed += 1;
            st.sum = p.add(st.sum, m);
            m
        };
        self.consumed.insert(g);
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::mac_reference_for_tests as reference;
    use crate::crypto::{MockBackend, MockG1};
    use num_bigint::BigUint;

    fn pair(peer: u32, pub_: u128, key: u128) -> PairKey<MockBackend> {
        PairKey {
            peer: NodeId(peer),
            peer_public: MockG1(Scalar(pub_)),
            seed: LongTermSeedKey {
                key: MockG1(Scalar(key)),
                epoch: 0,
            },
        }
    }

    fn clock(w: u32) -> SlotClock {
        SlotClock::new(4, w).unwrap()
    }

    #[test]
    fn both_endpoints_derive_equal_masks() {
        let b = MockBackend::compat();
        // Node 1 selected node 2; they share seed key 77.
        let mut owner = MaskSchedule::new(NodeId(1), MockG1(Scalar(10)), vec![pair(2, 20, 77)], vec![], None, clock(4));
        let mut proxy = MaskSchedule::new(NodeId(2), MockG1(Scalar(20)), vec![], vec![pair(1, 10, 77)], None, clock(4));
        owner.provision_day(&b, 1).unwrap();
        proxy.provision_day(&b, 1).unwrap();
        let s_owner = owner.outgoing_mask(&b, &owner.proxies()[0].clone(), 1, 1).unwrap();
        let s_proxy = proxy.incoming_mask(&b, &proxy.selected_by()[0].clone(), 1, 1).unwrap();
        assert_eq!(s_owner, s_proxy);
        let p = b.params().p;
        assert_eq!(p.add(owner.net_mask(&b, 1, 1).unwrap(), proxy.net_mask(&b, 1, 1).unwrap()), Scalar::ZERO);
        assert_ne!(owner.net_mask(&b, 1, 1).unwrap(), owner.net_mask(&b, 1, 2).unwrap());
    }

    #[test]
    fn mask_matches_reference_hmac_and_bignum_reduction() {
        let b = MockBackend::compat();
        let mut owner = MaskSchedule::new(NodeId(1), MockG1(Scalar(10)), vec![pair(2, 20, 77)], vec![], None, clock(4));
        owner.provision_day(&b, 3).unwrap();
        let key = *owner.epoch(NodeId(2), 3).unwrap().short_term_key(2).unwrap();
        let mut msg = vec![0u8; 48];
        msg.extend(10u128.to_be_bytes());
        msg.extend([0u8; 48]);
        msg.extend(20u128.to_be_bytes());
        msg.extend(3u32.to_be_bytes());
        msg.extend(2u16.to_be_bytes());
        let expected = BigUint::from_bytes_be(&reference::hmac_sha256(&key, &msg))
            % BigUint::from(b.params().p.modulus());
        let got = owner.outgoing_mask(&b, &owner.proxies()[0].clone(), 3, 2).unwrap();
        assert_eq!(BigUint::from(got.0), expected);
    }

    #[test]
    fn unprovisioned_day_is_an_error() {
        let b = MockBackend::compat();
        let owner = MaskSchedule::new(NodeId(1), MockG1(Scalar(10)), vec![pair(2, 20, 77)], vec![], None, clock(4));
        assert_eq!(
            owner.net_mask(&b, 1, 1),
            Err(KeyError::KeyNotProvisioned { peer: NodeId(2), day: 1 })
        );
    }

    #[test]
    fn no_proxies_means_zero_mask() {
        let b = MockBackend::compat();
        let m = MaskSchedule::<MockBackend>::new(NodeId(1), MockG1(Scalar(10)), vec![], vec![], None, clock(4));
        assert_eq!(m.net_mask(&b, 1, 1).unwrap(), Scalar::ZERO);
    }

    #[test]
    fn masks_are_single_use() {
        let b = MockBackend::compat();
        let mut m = MaskSchedule::new(NodeId(1), MockG1(Scalar(10)), vec![pair(2, 20, 77)], vec![], None, clock(4));
        m.provision_day(&b, 1).unwrap();
        m.take_mask(&b, 1, 1).unwrap();
        assert_eq!(m.take_mask(&b, 1, 1), Err(KeyError::OneTimeMaskViolation { day: 1, slot: 1 }));
    }

    #[test]
    fn closing_before_period_is_complete_is_a_sequencing_error() {
        let b = MockBackend::compat();
        let mut m = MaskSchedule::new(NodeId(1), MockG1(Scalar(10)), vec![pair(2, 20, 77)], vec![], Some(b"k".to_vec()), clock(4));
        m.provision_day(&b, 1).unwrap();
        m.take_mask(&b, 1, 1).unwrap();
        assert!(matches!(m.take_mask(&b, 1, 4), Err(KeyError::Sequencing { completed: 1, required: 3, .. })));
    }

    #[test]
    fn closing_mask_sums_period_to_billing_mask() {
        let b = MockBackend::compat();
        let p = b.params().p;
        let mut m = MaskSchedule::new(
            NodeId(1),
            MockG1(Scalar(10)),
            vec![pair(2, 20, 77), pair(3, 30, 78)],
            vec![pair(4, 40, 79)],
            Some(b"billing-key".to_vec()),
            clock(4),
        );
        m.provision_day(&b, 1).unwrap();
        let masks: Vec<Scalar> = (1..=4).map(|t| m.take_mask(&b, 1, t).unwrap()).collect();
        assert_eq!(p.sum(masks), m.billing_mask(&b, 0).unwrap());
    }

    #[test]
    fn single_slot_period_closes_immediately() {
        let b = MockBackend::compat();
        let mut m = MaskSchedule::new(NodeId(1), MockG1(Scalar(10)), vec![pair(2, 20, 77)], vec![], Some(b"k".to_vec()), clock(1));
        m.provision_day(&b, 1).unwrap();
        assert_eq!(m.take_mask(&b, 1, 1).unwrap(), m.billing_mask(&b, 0).unwrap());
        assert_eq!(m.take_mask(&b, 1, 2).unwrap(), m.billing_mask(&b, 1).unwrap());
    }
}
