use super::{AggregationTree, ChildEvidence, ProtocolError, Rejection, Report};
use crate::billing::{billing_mask, recover_period_total, DLogSolver, HashAccumulator};
use crate::crypto::{bls_batch_verify, bls_verify, hmac_tag, homomorphic_hash, GroupBackend, MacTag};
use crate::field::Scalar;
use crate::keymgmt::MaskSchedule;
use crate::node::{is_fresh, NodeId, Timestamp};
use std::collections::BTreeMap;

/// Result of recovering an accepted round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recovery {
    /// `Σ r_i` for the slot.
    pub total: u64,
    /// `M_gw` with the utility's own mask removed; includes `Σ s^(b)` in a
    /// closing slot.
    pub raw: Scalar,
    /// `Σ s^(b)` removed from `raw` (zero outside closing slots).
    pub billing_removed: Scalar,
    pub closing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UtilityVerdict {
    Accepted(Recovery),
    /// The gateway report failed freshness or its signature.
    Rejected(Rejection),
    /// `H(M_gw) ≠ Σ h`: the gateway is the offender.
    HashMismatch,
    /// Some contributions were dropped along the way.
    Incomplete { expected: usize, received: usize },
    /// The aggregated MAC failed; `accused` is the outcome of attacker
    /// identification.
    MacMismatch { accused: Result<NodeId, ProtocolError> },
}

impl UtilityVerdict {
    pub fn accused(&self) -> Option<NodeId> {
        match self {
            UtilityVerdict::HashMismatch => Some(NodeId::GATEWAY),
            UtilityVerdict::MacMismatch { accused: Ok(id) } => Some(*id),
            _ => None,
        }
    }
}

/// Utility-side keys, masks, billing accumulators and the last gateway tuple.
#[derive(Debug, Clone)]
pub struct UtilityState<B: GroupBackend> {
    keys: BTreeMap<NodeId, Vec<u8>>,
    publics: BTreeMap<NodeId, B::G1>,
    schedule: MaskSchedule<B>,
    accumulator: HashAccumulator<B>,
    gateway_evidence: Option<ChildEvidence<B>>,
    r_max: u64,
    solver: Option<DLogSolver<B>>,
    dlog_threshold: u64,
}

impl<B: GroupBackend> UtilityState<B> {
    /// `keys` holds `K_{j,u}` for every meter and, if the gateway holds
    /// masks, for the gateway.
    pub fn new(
        keys: BTreeMap<NodeId, Vec<u8>>,
        publics: BTreeMap<NodeId, B::G1>,
        schedule: MaskSchedule<B>,
        r_max: u64,
        dlog_threshold: u64,
    ) -> Self {
        let clock = schedule.clock();
        UtilityState {
            keys,
            publics,
            schedule,
            accumulator: HashAccumulator::new(clock),
            gateway_evidence: None,
            r_max,
            solver: None,
            dlog_threshold,
        }
    }

    pub fn schedule(&self) -> &MaskSchedule<B> {
        &self.schedule
    }

    pub fn schedule_mut(&mut self) -> &mut MaskSchedule<B> {
        &mut self.schedule
    }

    pub fn key(&self, id: NodeId) -> Option<&[u8]> {
        self.keys.get(&id).map(|k| k.as_slice())
    }

    pub fn public(&self, id: NodeId) -> Option<&B::G1> {
        self.publics.get(&id)
    }

    pub fn gateway_evidence(&self) -> Option<&ChildEvidence<B>> {
        self.gateway_evidence.as_ref()
    }

    pub fn accumulator(&self) -> &HashAccumulator<B> {
        &self.accumulator
    }

    /// Verifies the gateway report for `(day, slot)` and recovers the sum.
    /// `contributors` is the expected hash-list enumeration. The utility's
    /// mask for the slot is consumed whatever the verdict.
    #[allow(clippy::too_many_arguments)]
    pub fn process(
        &mut self,
        backend: &B,
        report: &Report<B>,
        contributors: &[NodeId],
        day: u32,
        slot: u16,
        now: Timestamp,
        window: u32,
    ) -> Result<UtilityVerdict, ProtocolError> {
        let own_mask = self.schedule.take_mask(backend, day, slot)?;
        if !is_fresh(report.ts, now, window) {
            return Ok(UtilityVerdict::Rejected(Rejection::Stale));
        }
        let gw_public = self.publics.get(&NodeId::GATEWAY).ok_or(ProtocolError::UnknownNode(NodeId::GATEWAY))?;
        if !bls_verify(backend, gw_public, &report.message(), &report.sig) {
            return Ok(UtilityVerdict::Rejected(Rejection::BadSignature));
        }
        self.gateway_evidence = Some(report.evidence());
        if homomorphic_hash(backend, &[report.masked])? != backend.hash_sum(&report.hashes) {
            return Ok(UtilityVerdict::HashMismatch);
        }
        if report.hashes.len() != contributors.len() {
            return Ok(UtilityVerdict::Incomplete {
                expected: contributors.len(),
                received: report.hashes.len(),
            });
        }
        let mut expected_mac = MacTag::ZERO;
        for (id, h) in contributors.iter().zip(&report.hashes) {
            let key = self.keys.get(id).ok_or(ProtocolError::NoUtilityKey(*id))?;
            expected_mac = expected_mac ^ hmac_tag(key, &backend.encode_hash(h))?;
        }
        if expected_mac != report.mac {
            return Ok(UtilityVerdict::MacMismatch {
                accused: Err(ProtocolError::InconsistentEvidence),
            });
        }
        let p = backend.params().p;
        let clock = self.schedule.clock();
        let g = clock.global_slot(day, slot)?;
        let closing = clock.is_closing_global(g);
        let raw = p.add(report.masked, own_mask);
        let meters: Vec<NodeId> = contributors.iter().copied().filter(|c| c.is_meter()).collect();
        let mut billing_removed = Scalar::ZERO;
        if closing {
            let period = clock.period_of_global(g);
            for m in &meters {
                billing_removed = p.add(billing_removed, billing_mask(backend, &self.keys[m], period)?);
            }
        }
        let total = p.sub(raw, billing_removed);
        let bound = meters.len() as u128 * self.r_max as u128;
        if total.value() > bound {
            return Err(ProtocolError::Consistency {
                value: total.value(),
                bound,
            });
        }
        for (id, h) in contributors.iter().zip(&report.hashes) {
            if id.is_meter() {
                self.accumulator.record(*id, g, h.clone());
            }
        }
        Ok(UtilityVerdict::Accepted(Recovery {
            total: total.value() as u64,
            raw,
            billing_removed,
            closing,
        }))
    }

    /// `Σ r` over a billing period for one meter.
    pub fn period_total(&mut self, backend: &B, meter: NodeId, period: u64) -> Result<u64, ProtocolError> {
        let acc = self.accumulator.accumulate(backend, meter, period)?;
        let key = self.keys.get(&meter).ok_or(ProtocolError::NoUtilityKey(meter))?;
        let s_b = billing_mask(backend, key, period)?;
        let max = self.schedule.clock().period_len as u64 * self.r_max;
        let threshold = self.dlog_threshold;
        let solver = self
            .solver
            .get_or_insert_with(|| DLogSolver::new(backend, &backend.hash_generators()[0], max, threshold));
        Ok(recover_period_total(backend, meter, period, &acc, s_b, solver)?)
    }
}

/// Authenticated access to the evidence nodes retained from the last round.
pub trait EvidenceSource<B: GroupBackend> {
    /// Tuples `node` kept for each of its children.
    fn children_evidence(&self, node: NodeId) -> Option<Vec<(NodeId, ChildEvidence<B>)>>;
    /// `node`'s own tuple as kept by its parent (the utility for the gateway).
    fn own_tuple(&self, node: NodeId) -> Option<ChildEvidence<B>>;
}

/// Bottom-up check of every relaying node: its children's signatures over
/// the tuples it holds, then that its own contribution `M_i − Σ M_c` matches
/// the MAC it owes the utility. Returns the first node failing either.
pub fn identify_attacker<B: GroupBackend, E: EvidenceSource<B>>(
    backend: &B,
    utility: &UtilityState<B>,
    tree: &AggregationTree,
    source: &E,
) -> Result<NodeId, ProtocolError> {
    let p = backend.params().p;
    for node in tree.non_leaf_bottom_up() {
        let own = source.own_tuple(node).ok_or(ProtocolError::MissingEvidence(node))?;
        let Some(children) = source.children_evidence(node) else {
            return Ok(node);
        };
        let mut ids: Vec<NodeId> = children.iter().map(|(c, _)| *c).collect();
        ids.sort();
        if ids != tree.children(node) {
            return Ok(node);
        }
        let mut publics = Vec::with_capacity(children.len());
        for (c, _) in &children {
            publics.push(utility.public(*c).ok_or(ProtocolError::UnknownNode(*c))?);
        }
        let msgs: Vec<Vec<u8>> = children.iter().map(|(_, e)| e.message()).collect();
        let items: Vec<_> = children
            .iter()
            .zip(&msgs)
            .zip(&publics)
            .map(|(((_, e), m), y)| (*y, m.as_slice(), &e.sig))
            .collect();
        if !bls_batch_verify(backend, &items) {
            return Ok(node);
        }
        let contribution = p.sub(own.masked, p.sum(children.iter().map(|(_, e)| e.masked)));
        let folded = own.mac ^ MacTag::xor_fold(children.iter().map(|(_, e)| &e.mac));
        let consistent = match utility.key(node) {
            Some(key) => {
                let h = homomorphic_hash(backend, &[contribution])?;
                hmac_tag(key, &backend.encode_hash(&h))? == folded
            }
            None if node == NodeId::GATEWAY => contribution.is_zero() && folded == MacTag::ZERO,
            None => return Err(ProtocolError::NoUtilityKey(node)),
        };
        if !consistent {
            return Ok(node);
        }
    }
    Err(ProtocolError::InconsistentEvidence)
}
