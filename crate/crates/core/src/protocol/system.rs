use super::{
    identify_attacker, AggregationTree, Attack, ChildEvidence, ChildReport, EvidenceSource, NodeState,
    ProtocolError, Rejection, Report, UtilityState, UtilityVerdict,
};
use crate::billing::{SlotClock, DEFAULT_TABLE_THRESHOLD};
use crate::crypto::GroupBackend;
use crate::keymgmt::{
    ke_confirm, ke_finalize, ke_initiate, ke_respond, KeyError, LongTermSeedKey, MaskSchedule, NodeIdentity,
    PairKey, ProxyGraph, ProxyPolicy, TrustedAuthority,
};
use crate::node::{NodeId, Timestamp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub meters: u32,
    pub lambda: usize,
    pub include_infrastructure: bool,
    pub gateway_alpha: usize,
    pub utility_alpha: usize,
    pub slots_per_day: u16,
    pub period_len: u32,
    pub r_max: u64,
    /// Freshness window in seconds.
    pub window: u32,
    /// Seconds between rounds.
    pub round_period: u32,
    pub dlog_threshold: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            meters: 36,
            lambda: 4,
            include_infrastructure: true,
            gateway_alpha: 0,
            utility_alpha: 0,
            slots_per_day: 96,
            period_len: 96,
            r_max: 10_000,
            window: 5,
            round_period: 60,
            dlog_threshold: DEFAULT_TABLE_THRESHOLD,
        }
    }
}

impl SystemConfig {
    pub fn policy(&self) -> ProxyPolicy {
        ProxyPolicy {
            lambda: self.lambda,
            include_infrastructure: self.include_infrastructure,
            gateway_alpha: self.gateway_alpha,
            utility_alpha: self.utility_alpha,
        }
    }

    pub fn clock(&self) -> Result<SlotClock, KeyError> {
        SlotClock::new(self.slots_per_day, self.period_len)
    }

    pub fn meter_ids(&self) -> Vec<NodeId> {
        (1..=self.meters).map(NodeId::meter).collect()
    }
}

/// Where a round's slot, day and timestamp come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundCtx {
    pub round: u64,
    pub day: u32,
    pub slot: u16,
    pub ts: Timestamp,
    pub period: u64,
    pub closing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionPoint {
    /// Dropped by the receiver's freshness check.
    Timestamp,
    /// Failed signature verification at the receiver.
    Signature,
    /// Failed the receiver's hash-consistency check.
    HashCheck,
    /// Aggregated MAC mismatch at the utility.
    UtilityMac,
}

/// A problem noticed by `at` about the report received from `from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub point: DetectionPoint,
    pub at: NodeId,
    pub from: NodeId,
}

/// Result of one node's phase 1 and phase 2.
#[derive(Debug, Clone)]
pub struct NodeStep<B: GroupBackend> {
    pub report: Report<B>,
    pub accepted: Vec<NodeId>,
    pub rejected: Vec<(NodeId, Rejection)>,
}

#[derive(Debug, Clone)]
pub struct RoundReport<B: GroupBackend> {
    pub ctx: RoundCtx,
    pub verdict: UtilityVerdict,
    pub detections: Vec<Detection>,
    /// Nodes blamed by a parent's hash check or by identification.
    pub accused: BTreeSet<NodeId>,
    pub gateway_report: Report<B>,
}

impl<B: GroupBackend> RoundReport<B> {
    pub fn recovered(&self) -> Option<u64> {
        match &self.verdict {
            UtilityVerdict::Accepted(r) => Some(r.total),
            _ => None,
        }
    }

    pub fn detected(&self) -> bool {
        !self.detections.is_empty()
    }
}

/// A provisioned network: trusted authority, node identities, proxy
/// relation, pairwise keys and every node's protocol state.
#[derive(Debug, Clone)]
pub struct System<B: GroupBackend> {
    backend: B,
    config: SystemConfig,
    clock: SlotClock,
    authority: TrustedAuthority<B>,
    graph: ProxyGraph,
    pair_keys: BTreeMap<(NodeId, NodeId), LongTermSeedKey<B>>,
    nodes: BTreeMap<NodeId, NodeState<B>>,
    utility: UtilityState<B>,
    provisioned_day: Option<u32>,
    last_reports: BTreeMap<NodeId, Report<B>>,
}

fn pair(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

impl<B: GroupBackend> System<B> {
    /// Enrols every node with a fresh trusted authority, assigns proxies,
    /// runs the three-message key exchange for every pair that needs a key
    /// and builds the per-node mask schedules.
    pub fn provision(backend: B, config: SystemConfig, seed: u64) -> Result<Self, ProtocolError> {
        if config.meters == 0 {
            return Err(ProtocolError::Topology("at least one meter is required".into()));
        }
        let graph = ProxyGraph::assign(&config.meter_ids(), &config.policy(), seed)?;
        Self::provision_with_graph(backend, config, graph, seed)
    }

    /// As [`System::provision`] with an explicit proxy relation.
    pub fn provision_with_graph(backend: B, config: SystemConfig, graph: ProxyGraph, seed: u64) -> Result<Self, ProtocolError> {
        if config.meters == 0 {
            return Err(ProtocolError::Topology("at least one meter is required".into()));
        }
        if config.r_max == 0 {
            return Err(KeyError::Parameter("R_max must be positive".into()).into());
        }
        let clock = config.clock()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let authority = TrustedAuthority::generate(&backend, &mut rng);
        let meters = config.meter_ids();
        let all: Vec<NodeId> = meters
            .iter()
            .copied()
            .chain([NodeId::GATEWAY, NodeId::UTILITY])
            .collect();
        let identities: BTreeMap<NodeId, NodeIdentity<B>> = all
            .iter()
            .map(|&id| (id, authority.enroll(&backend, id, &mut rng)))
            .collect();
        if !graph.is_consistent() || all.iter().any(|id| graph.get(*id).is_none()) {
            return Err(KeyError::Parameter("proxy graph does not cover every node consistently".into()).into());
        }
        let gateway_masks = graph.get(NodeId::GATEWAY).is_some_and(|a| a.lambda() > 0);

        let mut needed = graph.key_pairs();
        for &m in &meters {
            needed.insert(pair(m, NodeId::UTILITY));
        }
        if gateway_masks {
            needed.insert(pair(NodeId::GATEWAY, NodeId::UTILITY));
        }
        let mut pair_keys = BTreeMap::new();
        for (a, b) in needed {
            let key = exchange(&backend, &authority, &identities[&a], &identities[&b], config.window, &mut rng)?;
            pair_keys.insert((a, b), key);
        }

        let key_bytes = |a: NodeId, b: NodeId| pair_keys.get(&pair(a, b)).map(|k| k.key_bytes(&backend));
        let schedule_for = |id: NodeId, billing: Option<Vec<u8>>| {
            let a = graph.get(id).expect("node in proxy graph");
            let peers = |set: &BTreeSet<NodeId>| -> Vec<PairKey<B>> {
                set.iter()
                    .map(|&j| PairKey {
                        peer: j,
                        peer_public: identities[&j].public().clone(),
                        seed: pair_keys[&pair(id, j)].clone(),
                    })
                    .collect()
            };
            MaskSchedule::new(
                id,
                identities[&id].public().clone(),
                peers(&a.proxies),
                peers(&a.selected_by),
                billing,
                clock,
            )
        };

        let mut nodes = BTreeMap::new();
        let mut utility_keys = BTreeMap::new();
        for &m in &meters {
            let k = key_bytes(m, NodeId::UTILITY).expect("meter-utility key");
            utility_keys.insert(m, k.clone());
            nodes.insert(m, NodeState::new(identities[&m].clone(), schedule_for(m, Some(k.clone())), Some(k)));
        }
        let gw_key = if gateway_masks {
            key_bytes(NodeId::GATEWAY, NodeId::UTILITY)
        } else {
            None
        };
        if let Some(k) = &gw_key {
            utility_keys.insert(NodeId::GATEWAY, k.clone());
        }
        nodes.insert(
            NodeId::GATEWAY,
            NodeState::new(identities[&NodeId::GATEWAY].clone(), schedule_for(NodeId::GATEWAY, None), gw_key),
        );
        let publics = identities
            .iter()
            .filter(|(id, _)| **id != NodeId::UTILITY)
            .map(|(id, ident)| (*id, ident.public().clone()))
            .collect();
        let utility = UtilityState::new(
            utility_keys,
            publics,
            schedule_for(NodeId::UTILITY, None),
            config.r_max,
            config.dlog_threshold,
        );
        Ok(System {
            backend,
            config,
            clock,
            authority,
            graph,
            pair_keys,
            nodes,
            utility,
            provisioned_day: None,
            last_reports: BTreeMap::new(),
        })
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn clock(&self) -> SlotClock {
        self.clock
    }

    pub fn authority(&self) -> &TrustedAuthority<B> {
        &self.authority
    }

    pub fn proxy_graph(&self) -> &ProxyGraph {
        &self.graph
    }

    pub fn pair_keys(&self) -> &BTreeMap<(NodeId, NodeId), LongTermSeedKey<B>> {
        &self.pair_keys
    }

    pub fn meters(&self) -> Vec<NodeId> {
        self.config.meter_ids()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeState<B>> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut NodeState<B>> {
        self.nodes.get_mut(&id)
    }

    pub fn utility(&self) -> &UtilityState<B> {
        &self.utility
    }

    pub fn utility_mut(&mut self) -> &mut UtilityState<B> {
        &mut self.utility
    }

    pub fn gateway_has_masks(&self) -> bool {
        self.nodes[&NodeId::GATEWAY].schedule().has_masks()
    }

    /// Expected hash-list enumeration of the gateway report.
    pub fn contributors(&self, tree: &AggregationTree) -> Vec<NodeId> {
        let mut v = Vec::with_capacity(tree.meter_count() + 1);
        if self.gateway_has_masks() {
            v.push(NodeId::GATEWAY);
        }
        v.extend(tree.enumeration(NodeId::GATEWAY));
        v
    }

    /// Slot, day and timestamp of a 0-based round index.
    pub fn round_ctx(&self, round: u64) -> RoundCtx {
        let (day, slot) = self.clock.day_slot(round);
        RoundCtx {
            round,
            day,
            slot,
            ts: ((round + 1) * self.config.round_period as u64) as Timestamp,
            period: self.clock.period_of_global(round),
            closing: self.clock.is_closing_global(round),
        }
    }

    /// Provisions key chains for the round's day on every node and clears
    /// per-round evidence.
    pub fn begin_round(&mut self, round: u64) -> Result<RoundCtx, ProtocolError> {
        let ctx = self.round_ctx(round);
        if self.provisioned_day != Some(ctx.day) {
            for n in self.nodes.values_mut() {
                n.schedule_mut().provision_day(&self.backend, ctx.day)?;
                n.schedule_mut().forget_days_before(ctx.day);
            }
            self.utility.schedule_mut().provision_day(&self.backend, ctx.day)?;
            self.utility.schedule_mut().forget_days_before(ctx.day);
            self.provisioned_day = Some(ctx.day);
        }
        Ok(ctx)
    }

    /// Phase 1 and phase 2 at one node. A relay attack by this node is
    /// applied between the two phases.
    pub fn process_node(
        &mut self,
        id: NodeId,
        ctx: &RoundCtx,
        reading: Option<u64>,
        incoming: Vec<(NodeId, Report<B>)>,
        now: Timestamp,
        attack: Option<&Attack>,
    ) -> Result<NodeStep<B>, ProtocolError> {
        let mut children = Vec::with_capacity(incoming.len());
        for (from, report) in incoming {
            let public = self.nodes.get(&from).ok_or(ProtocolError::UnknownNode(from))?.public().clone();
            children.push(ChildReport { from, public, report });
        }
        let window = self.config.window;
        let r_max = self.config.r_max;
        let backend = &self.backend;
        let node = self.nodes.get_mut(&id).ok_or(ProtocolError::UnknownNode(id))?;
        let mut out = node.phase1(backend, children, now, window);
        if let Some(a) = attack.filter(|a| a.kind.is_relay() && a.attacker == id) {
            a.apply_relay(backend, &mut out.accepted);
        }
        let report = node.phase2(backend, reading, r_max, &out.accepted, ctx.day, ctx.slot, ctx.ts)?;
        Ok(NodeStep {
            report,
            accepted: out.accepted.iter().map(|(c, _)| *c).collect(),
            rejected: out.rejected,
        })
    }

    /// Applies a link attack to `from`'s outgoing report and remembers the
    /// untouched report for later replays.
    pub fn transmit(&mut self, from: NodeId, mut report: Report<B>, attack: Option<&Attack>) -> Report<B> {
        let previous = self.last_reports.insert(from, report.clone());
        if let Some(a) = attack.filter(|a| !a.kind.is_relay() && a.target == from) {
            a.apply_link(&mut report, previous.as_ref());
        }
        report
    }

    /// Utility verification and recovery; runs attacker identification on a
    /// MAC mismatch.
    pub fn finish_round(
        &mut self,
        tree: &AggregationTree,
        ctx: &RoundCtx,
        report: &Report<B>,
        now: Timestamp,
    ) -> Result<UtilityVerdict, ProtocolError> {
        let contributors = self.contributors(tree);
        let verdict = self
            .utility
            .process(&self.backend, report, &contributors, ctx.day, ctx.slot, now, self.config.window)?;
        Ok(match verdict {
            UtilityVerdict::MacMismatch { .. } => UtilityVerdict::MacMismatch {
                accused: identify_attacker(&self.backend, &self.utility, tree, self),
            },
            v => v,
        })
    }

    /// Runs one synchronous round over `tree`: every node processes its
    /// children in post-order with no delay, then the utility verifies.
    pub fn run_round(
        &mut self,
        tree: &AggregationTree,
        round: u64,
        readings: &BTreeMap<NodeId, u64>,
        attack: Option<&Attack>,
    ) -> Result<RoundReport<B>, ProtocolError> {
        let ctx = self.begin_round(round)?;
        let mut outbox: BTreeMap<NodeId, Report<B>> = BTreeMap::new();
        let mut detections = Vec::new();
        let mut accused = BTreeSet::new();
        let mut gateway_report = None;
        for id in tree.post_order() {
            let incoming = tree
                .children(id)
                .iter()
                .filter_map(|c| outbox.remove(c).map(|r| (*c, r)))
                .collect();
            let reading = if id.is_meter() {
                Some(*readings.get(&id).ok_or(ProtocolError::MissingReading(id))?)
            } else {
                None
            };
            let step = self.process_node(id, &ctx, reading, incoming, ctx.ts, attack)?;
            record_rejections(id, &step.rejected, &mut detections, &mut accused);
            let sent = self.transmit(id, step.report, attack);
            if id == NodeId::GATEWAY {
                gateway_report = Some(sent);
            } else {
                outbox.insert(id, sent);
            }
        }
        let gateway_report = gateway_report.expect("gateway is processed last");
        let verdict = self.finish_round(tree, &ctx, &gateway_report, ctx.ts)?;
        record_verdict(&verdict, &mut detections, &mut accused);
        Ok(RoundReport {
            ctx,
            verdict,
            detections,
            accused,
            gateway_report,
        })
    }

    /// `Σ r` over a completed billing period for one meter.
    pub fn period_total(&mut self, meter: NodeId, period: u64) -> Result<u64, ProtocolError> {
        self.utility.period_total(&self.backend, meter, period)
    }
}

/// Converts a node's phase-1 rejections into detections; hash mismatches
/// blame the sender.
pub fn record_rejections(
    at: NodeId,
    rejected: &[(NodeId, Rejection)],
    detections: &mut Vec<Detection>,
    accused: &mut BTreeSet<NodeId>,
) {
    for &(from, why) in rejected {
        let point = match why {
            Rejection::Stale => DetectionPoint::Timestamp,
            Rejection::BadSignature => DetectionPoint::Signature,
            Rejection::HashMismatch => {
                accused.insert(from);
                DetectionPoint::HashCheck
            }
        };
        detections.push(Detection { point, at, from });
    }
}

/// Converts the utility's verdict into detections and accusations.
pub fn record_verdict(verdict: &UtilityVerdict, detections: &mut Vec<Detection>, accused: &mut BTreeSet<NodeId>) {
    let point = match verdict {
        UtilityVerdict::Rejected(Rejection::Stale) => DetectionPoint::Timestamp,
        UtilityVerdict::Rejected(_) => DetectionPoint::Signature,
        UtilityVerdict::HashMismatch => DetectionPoint::HashCheck,
        UtilityVerdict::MacMismatch { .. } => DetectionPoint::UtilityMac,
        UtilityVerdict::Accepted(_) | UtilityVerdict::Incomplete { .. } => return,
    };
    detections.push(Detection {
        point,
        at: NodeId::UTILITY,
        from: NodeId::GATEWAY,
    });
    if let Some(id) = verdict.accused() {
        accused.insert(id);
    }
}

impl<B: GroupBackend> EvidenceSource<B> for System<B> {
    fn children_evidence(&self, node: NodeId) -> Option<Vec<(NodeId, ChildEvidence<B>)>> {
        self.nodes
            .get(&node)
            .map(|n| n.evidence().iter().map(|(c, e)| (*c, e.clone())).collect())
    }

    fn own_tuple(&self, node: NodeId) -> Option<ChildEvidence<B>> {
        if node == NodeId::GATEWAY {
            return self.utility.gateway_evidence().cloned();
        }
        self.nodes
            .values()
            .find_map(|n| n.evidence().get(&node))
            .cloned()
    }
}

/// Full KEReq/KERes/KConf exchange between two enrolled nodes.
fn exchange<B: GroupBackend>(
    backend: &B,
    authority: &TrustedAuthority<B>,
    initiator: &NodeIdentity<B>,
    responder: &NodeIdentity<B>,
    window: u32,
    rng: &mut ChaCha8Rng,
) -> Result<LongTermSeedKey<B>, ProtocolError> {
    let now = 0;
    let ta = authority.public();
    let (req, pending) = ke_initiate(backend, initiator, responder.id, now, rng);
    let (res, k_resp) = ke_respond(backend, responder, ta, &req, now, window, rng)?;
    let (conf, k_init) = ke_finalize(backend, initiator, &pending, ta, &res, now, window)?;
    ke_confirm(backend, initiator.public(), &conf, &k_resp, now, window)?;
    debug_assert_eq!(k_init, k_resp);
    Ok(k_init)
}
