use super::{ChildEvidence, ProtocolError, Report};
use crate::crypto::{bls_batch_verify, hmac_tag, homomorphic_hash, GroupBackend, MacTag};
use crate::field::Scalar;
use crate::keymgmt::{MaskSchedule, NodeIdentity};
use crate::node::{is_fresh, NodeId, Timestamp};
use std::collections::BTreeMap;

/// A report as received from a child, with the child's public key.
#[derive(Debug, Clone)]
pub struct ChildReport<B: GroupBackend> {
    pub from: NodeId,
    pub public: B::G1,
    pub report: Report<B>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rejection {
    /// Timestamp outside the freshness window.
    Stale,
    /// Signature failed individual verification after the batch failed.
    BadSignature,
    /// `H(M_c) ≠ Σ h` for this child.
    HashMismatch,
}

#[derive(Debug, Clone)]
pub struct Phase1Outcome<B: GroupBackend> {
    /// Accepted children in id order.
    pub accepted: Vec<(NodeId, Report<B>)>,
    pub rejected: Vec<(NodeId, Rejection)>,
}

/// Indices of the items that make `check` fail, found by recursive halving.
/// `check` must hold for the empty slice.
pub fn isolate<T, F: FnMut(&[T]) -> bool>(items: &[T], mut check: F) -> Vec<usize> {
    let mut bad = Vec::new();
    isolate_rec(items, 0, &mut check, &mut bad);
    bad
}

fn isolate_rec<T, F: FnMut(&[T]) -> bool>(items: &[T], offset: usize, check: &mut F, bad: &mut Vec<usize>) {
    if items.is_empty() || check(items) {
        return;
    }
    if items.len() == 1 {
        bad.push(offset);
        return;
    }
    let mid = items.len() / 2;
    isolate_rec(&items[..mid], offset, check, bad);
    isolate_rec(&items[mid..], offset + mid, check, bad);
}

fn hashes_consistent<B: GroupBackend>(backend: &B, reports: &[&ChildReport<B>]) -> bool {
    let p = backend.params().p;
    let m = p.sum(reports.iter().map(|c| c.report.masked));
    let Ok(lhs) = homomorphic_hash(backend, &[m]) else {
        return false;
    };
    lhs == backend.hash_sum(reports.iter().flat_map(|c| &c.report.hashes))
}

fn signatures_valid<B: GroupBackend>(backend: &B, reports: &[&ChildReport<B>]) -> bool {
    let msgs: Vec<Vec<u8>> = reports.iter().map(|c| c.report.message()).collect();
    let items: Vec<_> = reports
        .iter()
        .zip(&msgs)
        .map(|(c, m)| (&c.public, m.as_slice(), &c.report.sig))
        .collect();
    bls_batch_verify(backend, &items)
}

/// Phase 1 at a relaying node: freshness, batch signature check with
/// bisection on failure, then the batch hash check with bisection.
pub fn verify_children<B: GroupBackend>(
    backend: &B,
    mut children: Vec<ChildReport<B>>,
    now: Timestamp,
    window: u32,
) -> Phase1Outcome<B> {
    children.sort_by_key(|c| c.from);
    let mut rejected = Vec::new();
    let mut fresh = Vec::with_capacity(children.len());
    for c in &children {
        if is_fresh(c.report.ts, now, window) {
            fresh.push(c);
        } else {
            rejected.push((c.from, Rejection::Stale));
        }
    }
    let mut drop = |list: &mut Vec<&ChildReport<B>>, bad: Vec<usize>, why: Rejection| {
        for &i in bad.iter().rev() {
            rejected.push((list[i].from, why));
            list.remove(i);
        }
    };
    let forged = isolate(&fresh, |s| signatures_valid(backend, s));
    drop(&mut fresh, forged, Rejection::BadSignature);
    let tampered = isolate(&fresh, |s| hashes_consistent(backend, s));
    drop(&mut fresh, tampered, Rejection::HashMismatch);
    rejected.sort();
    Phase1Outcome {
        accepted: fresh.into_iter().map(|c| (c.from, c.report.clone())).collect(),
        rejected,
    }
}

/// State held by a meter or the gateway across rounds.
#[derive(Debug, Clone)]
pub struct NodeState<B: GroupBackend> {
    identity: NodeIdentity<B>,
    schedule: MaskSchedule<B>,
    utility_key: Option<Vec<u8>>,
    evidence: BTreeMap<NodeId, ChildEvidence<B>>,
}

impl<B: GroupBackend> NodeState<B> {
    pub fn new(identity: NodeIdentity<B>, schedule: MaskSchedule<B>, utility_key: Option<Vec<u8>>) -> Self {
        NodeState {
            identity,
            schedule,
            utility_key,
            evidence: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.identity.id
    }

    pub fn public(&self) -> &B::G1 {
        self.identity.public()
    }

    pub fn identity(&self) -> &NodeIdentity<B> {
        &self.identity
    }

    pub fn schedule(&self) -> &MaskSchedule<B> {
        &self.schedule
    }

    pub fn schedule_mut(&mut self) -> &mut MaskSchedule<B> {
        &mut self.schedule
    }

    pub fn utility_key(&self) -> Option<&[u8]> {
        self.utility_key.as_deref()
    }

    /// Evidence about children kept from the most recent round.
    pub fn evidence(&self) -> &BTreeMap<NodeId, ChildEvidence<B>> {
        &self.evidence
    }

    /// Verifies the children's reports and replaces the stored evidence with
    /// the accepted tuples.
    pub fn phase1(&mut self, backend: &B, children: Vec<ChildReport<B>>, now: Timestamp, window: u32) -> Phase1Outcome<B> {
        let out = verify_children(backend, children, now, window);
        self.evidence = out.accepted.iter().map(|(id, r)| (*id, r.evidence())).collect();
        out
    }

    /// Phase 2: masks the node's own reading (if any), aggregates the
    /// accepted children and signs. A meter must supply a reading; the
    /// gateway contributes a mask-only term when it holds masks.
    #[allow(clippy::too_many_arguments)]
    pub fn phase2(
        &mut self,
        backend: &B,
        reading: Option<u64>,
        r_max: u64,
        children: &[(NodeId, Report<B>)],
        day: u32,
        slot: u16,
        ts: Timestamp,
    ) -> Result<Report<B>, ProtocolError> {
        let p = backend.params().p;
        let id = self.id();
        let own = match reading {
            Some(r) if r > r_max => return Err(ProtocolError::ReadingRange { reading: r, max: r_max }),
            Some(r) => Some(p.add(p.reduce(r as u128), self.schedule.take_mask(backend, day, slot)?)),
            None if id.is_meter() => return Err(ProtocolError::MissingReading(id)),
            None if self.schedule.has_masks() => Some(self.schedule.take_mask(backend, day, slot)?),
            None => None,
        };
        let mut masked = Scalar::ZERO;
        let mut hashes = Vec::with_capacity(1 + children.iter().map(|(_, r)| r.hashes.len()).sum::<usize>());
        let mut mac = MacTag::ZERO;
        if let Some(m) = own {
            let key = self.utility_key.as_deref().ok_or(ProtocolError::NoUtilityKey(id))?;
            let h = homomorphic_hash(backend, &[m])?;
            mac = hmac_tag(key, &backend.encode_hash(&h))?;
            hashes.push(h);
            masked = m;
        }
        for (_, r) in children {
            masked = p.add(masked, r.masked);
            hashes.extend(r.hashes.iter().cloned());
            mac = mac ^ r.mac;
        }
        let sig = self
            .identity
            .keypair
            .sign(backend, &Report::<B>::signed_bytes(masked, &mac, ts));
        Ok(Report {
            masked,
            ts,
            hashes,
            mac,
            sig,
        })
    }
}
