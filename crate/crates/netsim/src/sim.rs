use crate::channel::{ms_to_ns, Channel, ChannelParams, SegmentRecord};
use crate::topology::{build_topology, Mode, Topology};
use crate::NetsimError;
use epic_core::analysis::{computation_cost, CostModel, Entity};
use epic_core::crypto::MockBackend;
use epic_core::node::{NodeId, Timestamp};
use epic_core::protocol::{
    record_rejections, record_verdict, Attack, AttackKind, Detection, Report, RoundCtx, System, SystemConfig,
    UtilityVerdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

/// Every simulation parameter. Serialises to a flat key/value document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Grid size `N`: the gateway plus `N - 1` meters.
    pub nodes: usize,
    pub mode: Mode,
    /// Radio range in grid units.
    pub range: f64,
    pub rounds: u64,
    pub round_period_s: u32,
    pub seed: u64,
    pub lambda: usize,
    /// Timestamp freshness window in seconds.
    pub window_s: u32,
    pub r_max: u64,
    /// A node stops waiting for missing children after this long.
    pub collection_timeout_ms: f64,
    #[serde(flatten)]
    pub channel: ChannelParams,
    #[serde(flatten)]
    pub cost: CostModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            nodes: 36,
            mode: Mode::HopByHop,
            range: 1.5,
            rounds: 30,
            round_period_s: 60,
            seed: 1,
            lambda: 4,
            window_s: 5,
            r_max: 10_000,
            collection_timeout_ms: 3000.0,
            channel: ChannelParams::default(),
            cost: CostModel::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), NetsimError> {
        self.channel.validate()?;
        self.cost.validate().map_err(|e| NetsimError::Config(e.to_string()))?;
        if self.nodes < 2 {
            return Err(NetsimError::Config("nodes must be at least 2".into()));
        }
        if self.round_period_s == 0 {
            return Err(NetsimError::Config("round period must be positive".into()));
        }
        if !(self.collection_timeout_ms.is_finite() && self.collection_timeout_ms > 0.0) {
            return Err(NetsimError::Config("collection timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            meters: (self.nodes - 1) as u32,
            lambda: self.lambda,
            r_max: self.r_max,
            window: self.window_s,
            round_period: self.round_period_s,
            ..SystemConfig::default()
        }
    }

    /// Parses a flat TOML document; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self, NetsimError> {
        let table: toml::Table = text.parse().map_err(|e| NetsimError::Config(format!("{e}")))?;
        let known = Self::default().to_toml_table();
        if let Some(k) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(NetsimError::Config(format!("unknown key {k:?}")));
        }
        let cfg: SimConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| NetsimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_toml_table()).expect("flat table serialises")
    }

    fn to_toml_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serialises to a table")
    }
}

/// An attack switched on from `activation_round` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub kind: AttackKind,
    /// Relaying node for relay attacks; equal to `target` for link attacks.
    pub attacker: NodeId,
    pub target: NodeId,
    pub activation_round: u64,
}

impl AttackScenario {
    /// Picks a position automatically: the first relaying node in bottom-up
    /// order that is not the gateway, falling back to the gateway, and its
    /// first child as target.
    pub fn auto(topology: &Topology, kind: AttackKind, activation_round: u64) -> Self {
        let tree = topology.tree();
        let order = tree.non_leaf_bottom_up();
        let relay = order
            .iter()
            .copied()
            .find(|n| n.is_meter())
            .unwrap_or(NodeId::GATEWAY);
        let target = tree.children(relay)[0];
        let attacker = if kind.is_relay() { relay } else { target };
        AttackScenario {
            kind,
            attacker,
            target,
            activation_round,
        }
    }

    pub fn attack(&self) -> Attack {
        if self.kind.is_relay() {
            Attack::relay(self.kind, self.attacker, self.target)
        } else {
            Attack::link(self.kind, self.target)
        }
    }

    pub fn validate(&self, topology: &Topology) -> Result<(), NetsimError> {
        let tree = topology.tree();
        if !tree.contains(self.target) || !self.target.is_meter() {
            return Err(NetsimError::Attack(format!("target {} is not a meter in the tree", self.target)));
        }
        if self.kind.is_relay() {
            if tree.parent(self.target) != Some(self.attacker) {
                return Err(NetsimError::Attack(format!(
                    "{} does not relay {} in {} mode",
                    self.attacker,
                    self.target,
                    topology.mode()
                )));
            }
        } else if self.attacker != self.target {
            return Err(NetsimError::Attack("link attacks name the sender as attacker".into()));
        }
        if self.kind == AttackKind::Replay && self.activation_round == 0 {
            return Err(NetsimError::Attack("replay needs an earlier round to copy".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// First report dispatch to the utility's verdict, in seconds.
    pub ct_s: f64,
    /// Bytes received at the gateway per second of round period.
    pub tp_bps: f64,
    /// Meter contributions reaching the gateway over meters.
    pub pdr: f64,
    pub gateway_bytes: u64,
    pub delivered: usize,
    pub expected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TraceKind {
    Generated { node: NodeId, children: usize, bytes: usize },
    Sent { from: NodeId, to: NodeId, origin: NodeId, bytes: usize, delivered: bool },
    Received { at: NodeId, origin: NodeId },
    Late { at: NodeId, origin: NodeId },
    Verdict { outcome: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub t_ns: u64,
    #[serde(flatten)]
    pub kind: TraceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundOutcome {
    pub round: u64,
    pub mode: Mode,
    pub nodes: usize,
    pub metrics: Metrics,
    pub outcome: String,
    pub recovered: Option<u64>,
    pub plaintext_sum: u64,
    pub detections: Vec<Detection>,
    pub accused: BTreeSet<NodeId>,
    pub attack: Option<AttackScenario>,
    pub trace: Vec<TraceEvent>,
    pub segments: Vec<SegmentRecord>,
}

impl RoundOutcome {
    pub fn detected(&self) -> bool {
        !self.detections.is_empty()
    }

    /// The single accused node, if identification named exactly one.
    pub fn identified(&self) -> Option<NodeId> {
        (self.accused.len() == 1).then(|| *self.accused.iter().next().expect("one element"))
    }
}

pub fn verdict_label(v: &UtilityVerdict) -> String {
    match v {
        UtilityVerdict::Accepted(_) => "accepted".into(),
        UtilityVerdict::Rejected(r) => format!("rejected-{r:?}").to_ascii_lowercase(),
        UtilityVerdict::HashMismatch => "hash-mismatch".into(),
        UtilityVerdict::Incomplete { .. } => "incomplete".into(),
        UtilityVerdict::MacMismatch { accused: Ok(_) } => "mac-mismatch".into(),
        UtilityVerdict::MacMismatch { accused: Err(_) } => "mac-mismatch-unresolved".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Start(NodeId),
    Ready(NodeId),
    Arrive { at: NodeId, packet: usize },
    AtUtility,
}

struct Packet {
    origin: NodeId,
    report: Report<MockBackend>,
}

/// One provisioned network. Rounds must run in order for replays to have
/// something to copy.
pub struct Simulation {
    config: SimConfig,
    topology: Topology,
    system: System<MockBackend>,
    channel: Channel,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, NetsimError> {
        config.validate()?;
        let topology = build_topology(config.nodes, config.mode, config.range)?;
        let system = System::provision(MockBackend::compat(), config.system_config(), config.seed)?;
        let channel = Channel::new(config.channel, config.nodes);
        Ok(Simulation {
            config,
            topology,
            system,
            channel,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn system(&self) -> &System<MockBackend> {
        &self.system
    }

    pub fn system_mut(&mut self) -> &mut System<MockBackend> {
        &mut self.system
    }

    /// Readings of round `round`, drawn from a stream fixed by the seed and
    /// the round index.
    pub fn readings(&self, round: u64) -> BTreeMap<NodeId, u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(2 * round);
        self.topology
            .meters()
            .into_iter()
            .map(|m| (m, rng.gen_range(0..=self.config.r_max)))
            .collect()
    }

    pub fn run_round(&mut self, round: u64, scenario: Option<&AttackScenario>) -> Result<RoundOutcome, NetsimError> {
        if let Some(s) = scenario {
            s.validate(&self.topology)?;
        }
        let attack = scenario
            .filter(|s| round >= s.activation_round)
            .map(AttackScenario::attack);
        let readings = self.readings(round);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(2 * round + 1);
        let ctx = self.system.begin_round(round)?;
        self.channel.reset();
        let mut run = RoundRun {
            sim: self,
            ctx,
            attack,
            readings: &readings,
            rng,
            queue: BinaryHeap::new(),
            seq: 0,
            packets: Vec::new(),
            inbox: BTreeMap::new(),
            started: BTreeSet::new(),
            outbox: BTreeMap::new(),
            first_dispatch: None,
            gateway_delivered: 0,
            trace: Vec::new(),
            detections: Vec::new(),
            accused: BTreeSet::new(),
            verdict: None,
        };
        run.execute()?;
        let RoundRun {
            first_dispatch,
            gateway_delivered,
            trace,
            detections,
            accused,
            verdict,
            ..
        } = run;
        let (verdict, done_ns) = verdict.ok_or(NetsimError::Stalled)?;
        let segments = self.channel.take_audit();
        let gateway_bytes: u64 = segments
            .iter()
            .filter(|s| s.to == NodeId::GATEWAY && s.delivered)
            .map(|s| s.bytes as u64)
            .sum();
        let expected = self.config.nodes - 1;
        let start = first_dispatch.unwrap_or(0);
        let metrics = Metrics {
            ct_s: (done_ns - start) as f64 / 1e9,
            tp_bps: gateway_bytes as f64 / self.config.round_period_s as f64,
            pdr: gateway_delivered as f64 / expected as f64,
            gateway_bytes,
            delivered: gateway_delivered,
            expected,
        };
        let recovered = match &verdict {
            UtilityVerdict::Accepted(r) => Some(r.total),
            _ => None,
        };
        Ok(RoundOutcome {
            round,
            mode: self.config.mode,
            nodes: self.config.nodes,
            metrics,
            outcome: verdict_label(&verdict),
            recovered,
            plaintext_sum: readings.values().sum(),
            detections,
            accused,
            attack: scenario.copied(),
            trace,
            segments,
        })
    }

    /// Runs rounds `0..rounds` in order.
    pub fn run(&mut self, scenario: Option<&AttackScenario>) -> Result<Vec<RoundOutcome>, NetsimError> {
        (0..self.config.rounds).map(|r| self.run_round(r, scenario)).collect()
    }
}

struct RoundRun<'a> {
    sim: &'a mut Simulation,
    ctx: RoundCtx,
    attack: Option<Attack>,
    readings: &'a BTreeMap<NodeId, u64>,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
    packets: Vec<Packet>,
    inbox: BTreeMap<NodeId, BTreeMap<NodeId, Report<MockBackend>>>,
    started: BTreeSet<NodeId>,
    outbox: BTreeMap<NodeId, Report<MockBackend>>,
    first_dispatch: Option<u64>,
    gateway_delivered: usize,
    trace: Vec<TraceEvent>,
    detections: Vec<Detection>,
    accused: BTreeSet<NodeId>,
    verdict: Option<(UtilityVerdict, u64)>,
}

impl RoundRun<'_> {
    fn push(&mut self, t: u64, e: Event) {
        self.queue.push(Reverse((t, self.seq, e)));
        self.seq += 1;
    }

    fn log(&mut self, t_ns: u64, kind: TraceKind) {
        self.trace.push(TraceEvent { t_ns, kind });
    }

    fn now(&self, t_ns: u64) -> Timestamp {
        self.ctx.ts + (t_ns / 1_000_000_000) as Timestamp
    }

    /// Children whose reports `node` waits for.
    fn expected_children(&self, node: NodeId) -> usize {
        self.sim.topology.tree().children(node).len()
    }

    fn execute(&mut self) -> Result<(), NetsimError> {
        let tree = self.sim.topology.tree().clone();
        let timeout = ms_to_ns(self.sim.config.collection_timeout_ms);
        for id in tree.post_order() {
            if tree.is_leaf(id) {
                self.push(0, Event::Start(id));
            } else {
                self.push(timeout, Event::Start(id));
            }
        }
        while let Some(Reverse((t, _, e))) = self.queue.pop() {
            match e {
                Event::Start(id) => self.start(id, t)?,
                Event::Ready(id) => self.ready(id, t),
                Event::Arrive { at, packet } => self.arrive(at, packet, t),
                Event::AtUtility => self.at_utility(&tree, t)?,
            }
        }
        Ok(())
    }

    fn start(&mut self, id: NodeId, t: u64) -> Result<(), NetsimError> {
        if !self.started.insert(id) {
            return Ok(());
        }
        let incoming: Vec<(NodeId, Report<MockBackend>)> = self.inbox.remove(&id).unwrap_or_default().into_iter().collect();
        if id == NodeId::GATEWAY {
            self.gateway_delivered = incoming.iter().map(|(_, r)| r.hashes.len()).sum();
        }
        let k = incoming.len();
        let hashes: usize = incoming.iter().map(|(_, r)| r.hashes.len()).sum();
        let reading = if id.is_meter() { Some(self.readings[&id]) } else { None };
        let now = self.now(t);
        let step = self
            .sim
            .system
            .process_node(id, &self.ctx, reading, incoming, now, self.attack.as_ref())?;
        record_rejections(id, &step.rejected, &mut self.detections, &mut self.accused);
        let cost = &self.sim.config.cost;
        let mut ms = cost.report();
        if k > 0 {
            ms += cost.batch_verify(k) + cost.batch_hash_check(hashes.max(1));
        }
        let done = t + ms_to_ns(ms);
        self.log(
            done,
            TraceKind::Generated {
                node: id,
                children: k,
                bytes: step.report.encoded_len(),
            },
        );
        self.outbox.insert(id, step.report);
        self.push(done, Event::Ready(id));
        Ok(())
    }

    fn ready(&mut self, id: NodeId, t: u64) {
        let report = self.outbox.remove(&id).expect("report generated before ready");
        let report = self.sim.system.transmit(id, report, self.attack.as_ref());
        if id == NodeId::GATEWAY {
            self.packets.push(Packet { origin: id, report });
            let link = ms_to_ns(self.sim.channel.params().utility_link_ms);
            self.push(t + link, Event::AtUtility);
            return;
        }
        self.first_dispatch = Some(self.first_dispatch.map_or(t, |f| f.min(t)));
        let packet = self.packets.len();
        self.packets.push(Packet { origin: id, report });
        self.forward(id, packet, t);
    }

    fn forward(&mut self, from: NodeId, packet: usize, t: u64) {
        let to = self.sim.topology.next_hop(from).expect("meters have a next hop");
        let bytes = self.packets[packet].report.encoded_len();
        let d = self
            .sim
            .channel
            .send(&self.sim.topology, from, to, bytes, t, &mut self.rng);
        let origin = self.packets[packet].origin;
        self.log(
            d.done_ns,
            TraceKind::Sent {
                from,
                to,
                origin,
                bytes,
                delivered: d.delivered,
            },
        );
        if d.delivered {
            self.push(d.done_ns, Event::Arrive { at: to, packet });
        }
    }

    fn arrive(&mut self, at: NodeId, packet: usize, t: u64) {
        let origin = self.packets[packet].origin;
        let logical_parent = self.sim.topology.tree().parent(origin);
        if logical_parent != Some(at) {
            // End-to-end relay: pass it on untouched.
            self.forward(at, packet, t);
            return;
        }
        if self.started.contains(&at) {
            self.log(t, TraceKind::Late { at, origin });
            return;
        }
        self.log(t, TraceKind::Received { at, origin });
        let report = self.packets[packet].report.clone();
        let inbox = self.inbox.entry(at).or_default();
        inbox.insert(origin, report);
        if inbox.len() == self.expected_children(at) {
            self.push(t, Event::Start(at));
        }
    }

    fn at_utility(&mut self, tree: &epic_core::protocol::AggregationTree, t: u64) -> Result<(), NetsimError> {
        let report = self
            .packets
            .iter()
            .rev()
            .find(|p| p.origin == NodeId::GATEWAY)
            .map(|p| p.report.clone())
            .expect("gateway report sent");
        let now = self.now(t);
        let ctx = self.ctx;
        let verdict = self.sim.system.finish_round(tree, &ctx, &report, now)?;
        record_verdict(&verdict, &mut self.detections, &mut self.accused);
        let n = tree.meter_count().max(1);
        let ms = computation_cost(Entity::Utility, n, &self.sim.config.cost).map_err(|e| NetsimError::Config(e.to_string()))?;
        let done = t + ms_to_ns(ms);
        self.log(
            done,
            TraceKind::Verdict {
                outcome: verdict_label(&verdict),
            },
        );
        self.verdict = Some((verdict, done));
        Ok(())
    }
}
