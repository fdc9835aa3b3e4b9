use crate::error::CliError;
use crate::output::{csv_bytes, fixed, to_json, Sink};
use crate::state::{self, State};
use crate::{AttackArgs, BillingArgs, Cli, CollusionArgs, Command, ModeArg, OverheadArgs, SetupArgs, SimulateArgs};
use epic_core::analysis::{
    collusion_monte_carlo, collusion_probability, overhead_report, proxies_needed, write_collusion_csv,
    write_overhead_csv, write_proxy_plan_csv, CollusionModel, CollusionPoint, CostModel, Entity, PoolSize,
    ProxyPlanPoint,
};
use epic_core::crypto::MockBackend;
use epic_core::node::NodeId;
use epic_core::protocol::{AttackKind, DetectionPoint, UtilityVerdict};
use epic_netsim::{
    grid, inject_attack, run_campaign, write_rounds_csv, write_summary_csv, AttackScenario, Mode, RoundOutcome,
    SimConfig,
};
use serde::Serialize;
use serde_json::value::RawValue;
use std::collections::BTreeMap;

pub fn run(cli: &Cli, argv: Vec<String>) -> Result<(), CliError> {
    let mut sink = Sink::new(cli.out.as_deref());
    let (seed, checksum) = match &cli.command {
        Command::Setup(a) => setup(cli, a, &mut sink)?,
        Command::Simulate(a) => simulate(cli, a, &mut sink)?,
        Command::Attack(a) => attack(cli, a, &mut sink)?,
        Command::Billing(a) => billing(cli, a, &mut sink)?,
        Command::Collusion(a) => (None, collusion(cli, a, &mut sink)?),
        Command::Overhead(a) => (None, overhead(cli, a, &mut sink)?),
    };
    sink.finish(argv, cli.config.clone(), seed, checksum)
}

type Provenance = (Option<u64>, Option<String>);

fn file_config(cli: &Cli) -> Result<SimConfig, CliError> {
    match &cli.config {
        None => Ok(SimConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            Ok(SimConfig::from_toml(&text)?)
        }
    }
}

fn single_mode(m: ModeArg) -> Result<Mode, CliError> {
    match m {
        ModeArg::Etoe => Ok(Mode::EndToEnd),
        ModeArg::Hbyh => Ok(Mode::HopByHop),
        ModeArg::Both => Err(CliError::Usage("--mode both is only valid for simulate".into())),
    }
}

/// Loads the state directory; `--config` and a differing `--seed` belong to
/// `setup`.
fn load_state(cli: &Cli) -> Result<State, CliError> {
    if cli.config.is_some() {
        return Err(CliError::Usage("--config applies to setup and overhead; the state already fixes every parameter".into()));
    }
    let st = state::load(&state::state_dir())?;
    if let Some(seed) = cli.seed.filter(|&s| s != st.config.seed) {
        return Err(CliError::Usage(format!(
            "state was provisioned with seed {}; rerun setup for seed {seed}",
            st.config.seed
        )));
    }
    Ok(st)
}

fn emit<T: Serialize>(
    cli: &Cli,
    sink: &mut Sink,
    name: &str,
    json: &T,
    csv: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    if cli.json {
        sink.add(&format!("{name}.json"), to_json(json)?);
    } else {
        sink.add(&format!("{name}.csv"), csv_bytes(csv)?);
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Serialize)]
struct SetupSummary {
    state_dir: String,
    nodes: usize,
    meters: usize,
    lambda: usize,
    mode: Mode,
    seed: u64,
    pair_keys: usize,
    checksum: String,
}

fn setup(cli: &Cli, a: &SetupArgs, sink: &mut Sink) -> Result<Provenance, CliError> {
    let mut cfg = file_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.n {
        cfg.nodes = n;
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(m) = a.mode {
        cfg.mode = single_mode(m)?;
    }
    let st = state::setup(&state::state_dir(), &cfg)?;
    let summary = SetupSummary {
        state_dir: st.dir.display().to_string(),
        nodes: cfg.nodes,
        meters: cfg.nodes - 1,
        lambda: cfg.lambda,
        mode: cfg.mode,
        seed: cfg.seed,
        pair_keys: st.material.pair_keys.len(),
        checksum: st.checksum.clone(),
    };
    emit(cli, sink, "setup", &summary, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["state_dir", "nodes", "meters", "lambda", "mode", "seed", "pair_keys", "checksum"])
            .map_err(csv_err)?;
        w.write_record([
            summary.state_dir.clone(),
            summary.nodes.to_string(),
            summary.meters.to_string(),
            summary.lambda.to_string(),
            summary.mode.to_string(),
            summary.seed.to_string(),
            summary.pair_keys.to_string(),
            summary.checksum.clone(),
        ])
        .map_err(csv_err)?;
        w.flush().map_err(|e| CliError::io("csv", e))
    })?;
    Ok((Some(cfg.seed), Some(st.checksum)))
}

#[derive(Serialize)]
struct RoundRow {
    #[serde(rename = "N")]
    n: usize,
    mode: Mode,
    round: u64,
    #[serde(rename = "CT_s")]
    ct_s: Box<RawValue>,
    #[serde(rename = "TP_Bps")]
    tp_bps: Box<RawValue>,
    #[serde(rename = "PDR")]
    pdr: Box<RawValue>,
    outcome: String,
    detected_attacks: usize,
    identified_attacker: Option<String>,
}

impl RoundRow {
    fn of(r: &RoundOutcome) -> RoundRow {
        RoundRow {
            n: r.nodes,
            mode: r.mode,
            round: r.round,
            ct_s: fixed(r.metrics.ct_s, 6),
            tp_bps: fixed(r.metrics.tp_bps, 3),
            pdr: fixed(r.metrics.pdr, 6),
            outcome: r.outcome.clone(),
            detected_attacks: r.detections.len(),
            identified_attacker: r.identified().map(|n| n.to_string()),
        }
    }
}

#[derive(Serialize)]
struct SummaryRow {
    #[serde(rename = "N")]
    n: usize,
    mode: Mode,
    rounds: usize,
    ct_mean_s: Box<RawValue>,
    ct_std_s: Box<RawValue>,
    tp_mean_bps: Box<RawValue>,
    tp_std_bps: Box<RawValue>,
    pdr_mean: Box<RawValue>,
    pdr_std: Box<RawValue>,
}

#[derive(Serialize)]
struct SimulateDoc {
    rounds: Vec<RoundRow>,
    summary: Vec<SummaryRow>,
}

fn simulate(cli: &Cli, a: &SimulateArgs, sink: &mut Sink) -> Result<Provenance, CliError> {
    let st = load_state(cli)?;
    let mut cfg = st.config.clone();
    if let Some(r) = a.rounds {
        cfg.rounds = r;
    }
    let modes = match a.mode {
        None => vec![cfg.mode],
        Some(ModeArg::Both) => Mode::ALL.to_vec(),
        Some(m) => vec![single_mode(m)?],
    };
    let res = run_campaign(&grid(&cfg, &[cfg.nodes], &modes), None)?;
    if cli.json {
        let doc = SimulateDoc {
            rounds: res.rows.iter().map(RoundRow::of).collect(),
            summary: res
                .summaries
                .iter()
                .map(|s| SummaryRow {
                    n: s.nodes,
                    mode: s.mode,
                    rounds: s.rounds,
                    ct_mean_s: fixed(s.ct_s.mean, 6),
                    ct_std_s: fixed(s.ct_s.std, 6),
                    tp_mean_bps: fixed(s.tp_bps.mean, 3),
                    tp_std_bps: fixed(s.tp_bps.std, 3),
                    pdr_mean: fixed(s.pdr.mean, 6),
                    pdr_std: fixed(s.pdr.std, 6),
                })
                .collect(),
        };
        sink.add("simulate.json", to_json(&doc)?);
    } else {
        sink.add("rounds.csv", csv_bytes(|b| Ok(write_rounds_csv(b, &res.rows)?))?);
        sink.add("summary.csv", csv_bytes(|b| Ok(write_summary_csv(b, &res.summaries)?))?);
    }
    Ok((Some(cfg.seed), Some(st.checksum)))
}

fn parse_node(s: &str) -> Result<NodeId, CliError> {
    let bad = || CliError::Usage(format!("unknown node {s:?}; use gw, smN or N"));
    match s {
        "gw" | "gateway" => Ok(NodeId::GATEWAY),
        _ => {
            let i: u32 = s.strip_prefix("sm").unwrap_or(s).parse().map_err(|_| bad())?;
            if i == 0 || i == u32::MAX {
                return Err(bad());
            }
            Ok(NodeId::meter(i))
        }
    }
}

pub fn point_label(p: DetectionPoint) -> &'static str {
    match p {
        DetectionPoint::Timestamp => "timestamp",
        DetectionPoint::Signature => "signature",
        DetectionPoint::HashCheck => "hash-check",
        DetectionPoint::UtilityMac => "utility",
    }
}

#[derive(Serialize)]
struct AttackRow {
    round: u64,
    kind: AttackKind,
    attacker: String,
    target: String,
    active: bool,
    outcome: String,
    detected: bool,
    detection: Option<&'static str>,
    detected_at: Option<String>,
    identified: Option<String>,
    identified_is_attacker: bool,
}

fn attack(cli: &Cli, a: &AttackArgs, sink: &mut Sink) -> Result<Provenance, CliError> {
    let st = load_state(cli)?;
    let kind: AttackKind = a.attack_type.parse().map_err(CliError::Usage)?;
    let mut cfg = st.config.clone();
    if let Some(m) = a.mode {
        cfg.mode = single_mode(m)?;
    }
    let sim = epic_netsim::Simulation::new(cfg.clone())?;
    let topo = sim.topology();
    let scenario = if a.attacker == "auto" {
        AttackScenario::auto(topo, kind, a.activation)
    } else {
        let node = parse_node(&a.attacker)?;
        let target = if kind.is_relay() {
            *topo
                .tree()
                .children(node)
                .first()
                .ok_or_else(|| CliError::Usage(format!("{node} relays no reports in this topology")))?
        } else {
            node
        };
        AttackScenario {
            kind,
            attacker: node,
            target,
            activation_round: a.activation,
        }
    };
    let rounds = inject_attack(&cfg, &scenario)?;
    let rows: Vec<AttackRow> = rounds
        .iter()
        .map(|r| {
            let first = r.detections.first();
            AttackRow {
                round: r.round,
                kind,
                attacker: scenario.attacker.to_string(),
                target: scenario.target.to_string(),
                active: r.round >= scenario.activation_round,
                outcome: r.outcome.clone(),
                detected: r.detected(),
                detection: first.map(|d| point_label(d.point)),
                detected_at: first.map(|d| d.at.to_string()),
                identified: r.identified().map(|n| n.to_string()),
                identified_is_attacker: r.identified() == Some(scenario.attacker),
            }
        })
        .collect();
    emit(cli, sink, "attack", &rows, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "round",
            "kind",
            "attacker",
            "target",
            "active",
            "outcome",
            "detected",
            "detection",
            "detected_at",
            "identified",
            "identified_is_attacker",
        ])
        .map_err(csv_err)?;
        for r in &rows {
            w.write_record([
                r.round.to_string(),
                r.kind.to_string(),
                r.attacker.clone(),
                r.target.clone(),
                r.active.to_string(),
                r.outcome.clone(),
                r.detected.to_string(),
                r.detection.unwrap_or_default().to_string(),
                r.detected_at.clone().unwrap_or_default(),
                r.identified.clone().unwrap_or_default(),
                r.identified_is_attacker.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io("csv", e))
    })?;
    Ok((Some(cfg.seed), Some(st.checksum)))
}

#[derive(Serialize)]
struct BillingRow {
    period: u64,
    meter: String,
    total: u64,
    plaintext: u64,
}

fn billing(cli: &Cli, a: &BillingArgs, sink: &mut Sink) -> Result<Provenance, CliError> {
    let st = load_state(cli)?;
    let mut sim = st.simulation()?;
    let period_len = sim.system().config().period_len as u64;
    let rounds = a.rounds.unwrap_or(period_len);
    if rounds < period_len {
        return Err(CliError::Usage(format!(
            "--rounds {rounds} does not cover a billing period of {period_len} slots"
        )));
    }
    let tree = sim.topology().tree().clone();
    let mut plain: BTreeMap<(u64, NodeId), u64> = BTreeMap::new();
    let mut slots: BTreeMap<u64, u64> = BTreeMap::new();
    for round in 0..rounds {
        let readings = sim.readings(round);
        let report = sim.system_mut().run_round(&tree, round, &readings, None)?;
        if !matches!(report.verdict, UtilityVerdict::Accepted(_)) {
            return Err(CliError::Internal(format!("honest round {round} was not accepted: {:?}", report.verdict)));
        }
        *slots.entry(report.ctx.period).or_default() += 1;
        for (m, r) in readings {
            *plain.entry((report.ctx.period, m)).or_default() += r;
        }
    }
    let mut rows = Vec::new();
    for ((period, meter), plaintext) in plain {
        if slots[&period] != period_len {
            continue;
        }
        let total = sim.system_mut().period_total(meter, period)?;
        if total != plaintext {
            return Err(CliError::Internal(format!(
                "period {period} total for {meter} is {total}, readings sum to {plaintext}"
            )));
        }
        rows.push(BillingRow {
            period,
            meter: meter.to_string(),
            total,
            plaintext,
        });
    }
    emit(cli, sink, "billing", &rows, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["period", "meter", "total", "plaintext"]).map_err(csv_err)?;
        for r in &rows {
            w.write_record([r.period.to_string(), r.meter.clone(), r.total.to_string(), r.plaintext.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io("csv", e))
    })?;
    Ok((Some(st.config.seed), Some(st.checksum)))
}

#[derive(Serialize)]
struct CollusionDoc {
    n: u64,
    m: u64,
    pool: PoolSize,
    lambda: u64,
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    p: Option<Box<RawValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<Box<RawValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<MonteCarloDoc>,
}

#[derive(Serialize)]
struct MonteCarloDoc {
    trials: u64,
    seed: u64,
    estimate: Box<RawValue>,
    std_error: Box<RawValue>,
}

fn collusion(cli: &Cli, a: &CollusionArgs, sink: &mut Sink) -> Result<Option<String>, CliError> {
    let pool: PoolSize = a.pool.parse().map_err(|e: epic_core::analysis::AnalysisError| CliError::Usage(e.to_string()))?;
    let Some(lambda) = a.lambda else {
        if a.trials.is_some() {
            return Err(CliError::Usage("--trials needs --lambda".into()));
        }
        let lambda_min = proxies_needed(a.n, a.m, a.epsilon, pool)?;
        let doc = CollusionDoc {
            n: a.n,
            m: a.m,
            pool,
            lambda: lambda_min,
            p: None,
            epsilon: Some(fixed(a.epsilon, 6)),
            monte_carlo: None,
        };
        let point = ProxyPlanPoint {
            n: a.n,
            m_over_n: a.m as f64 / a.n as f64,
            lambda_min,
        };
        emit(cli, sink, "collusion", &doc, |b| Ok(write_proxy_plan_csv(b, &[point])?))?;
        return Ok(None);
    };
    let model = CollusionModel::with_pool(a.n, a.m, lambda, pool)?;
    let p = collusion_probability(&model)?;
    let seed = cli.seed.unwrap_or(1);
    let mc = a.trials.map(|t| collusion_monte_carlo(&model, t, seed)).transpose()?;
    let doc = CollusionDoc {
        n: a.n,
        m: a.m,
        pool,
        lambda,
        p: Some(fixed(p, 6)),
        epsilon: None,
        monte_carlo: mc.map(|e| MonteCarloDoc {
            trials: e.trials,
            seed,
            estimate: fixed(e.estimate, 6),
            std_error: fixed(e.std_error, 6),
        }),
    };
    emit(cli, sink, "collusion", &doc, |buf| match mc {
        None => Ok(write_collusion_csv(
            buf,
            &[CollusionPoint {
                m: a.m,
                lambda,
                probability: p,
            }],
        )?),
        Some(e) => {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["m", "lambda", "P", "P_mc", "std_error", "trials"]).map_err(csv_err)?;
            w.write_record([
                a.m.to_string(),
                lambda.to_string(),
                format!("{p:.6}"),
                format!("{:.6}", e.estimate),
                format!("{:.6}", e.std_error),
                e.trials.to_string(),
            ])
            .map_err(csv_err)?;
            w.flush().map_err(|e| CliError::io("csv", e))
        }
    })?;
    Ok(None)
}

#[derive(Serialize)]
struct OverheadDoc {
    entity: Entity,
    n: usize,
    computation_ms: Box<RawValue>,
    message_bytes: usize,
}

fn overhead(cli: &Cli, a: &OverheadArgs, sink: &mut Sink) -> Result<Option<String>, CliError> {
    let model: CostModel = file_config(cli)?.cost;
    let entities: Vec<Entity> = if a.entity == "all" {
        Entity::ALL.to_vec()
    } else {
        vec![a.entity.parse()?]
    };
    let rows = overhead_report(&MockBackend::compat(), &model, &entities, &[a.n])?;
    let doc: Vec<OverheadDoc> = rows
        .iter()
        .map(|r| OverheadDoc {
            entity: r.entity,
            n: r.n,
            computation_ms: fixed(r.computation_ms, 6),
            message_bytes: r.message_bytes,
        })
        .collect();
    emit(cli, sink, "overhead", &doc, |b| Ok(write_overhead_csv(b, &rows)?))?;
    Ok(None)
}
