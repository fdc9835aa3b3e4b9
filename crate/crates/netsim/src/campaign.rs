use crate::sim::{AttackScenario, RoundOutcome, SimConfig, Simulation};
use crate::topology::Mode;
use crate::NetsimError;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        if xs.is_empty() {
            return Stat { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub nodes: usize,
    pub mode: Mode,
    pub rounds: usize,
    pub ct_s: Stat,
    pub tp_bps: Stat,
    pub pdr: Stat,
    pub gateway_bytes: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignResult {
    pub rows: Vec<RoundOutcome>,
    pub summaries: Vec<CampaignSummary>,
}

pub fn summarize(nodes: usize, mode: Mode, rounds: &[RoundOutcome]) -> CampaignSummary {
    let pick = |f: fn(&RoundOutcome) -> f64| Stat::of(&rounds.iter().map(f).collect::<Vec<_>>());
    CampaignSummary {
        nodes,
        mode,
        rounds: rounds.len(),
        ct_s: pick(|r| r.metrics.ct_s),
        tp_bps: pick(|r| r.metrics.tp_bps),
        pdr: pick(|r| r.metrics.pdr),
        gateway_bytes: pick(|r| r.metrics.gateway_bytes as f64),
    }
}

/// Runs every configuration independently and in parallel. Output order
/// follows the input order.
pub fn run_campaign(grid: &[SimConfig], scenario: Option<&AttackScenario>) -> Result<CampaignResult, NetsimError> {
    if grid.is_empty() {
        return Err(NetsimError::Config("empty campaign grid".into()));
    }
    let runs: Vec<Vec<RoundOutcome>> = grid
        .par_iter()
        .map(|cfg| Simulation::new(cfg.clone())?.run(scenario))
        .collect::<Result<_, _>>()?;
    let summaries = grid
        .iter()
        .zip(&runs)
        .map(|(cfg, rows)| summarize(cfg.nodes, cfg.mode, rows))
        .collect();
    Ok(CampaignResult {
        rows: runs.into_iter().flatten().collect(),
        summaries,
    })
}

/// Expands a base configuration over grid sizes and modes.
pub fn grid(base: &SimConfig, sizes: &[usize], modes: &[Mode]) -> Vec<SimConfig> {
    sizes
        .iter()
        .flat_map(|&nodes| {
            modes.iter().map(move |&mode| SimConfig {
                nodes,
                mode,
                ..base.clone()
            })
        })
        .collect()
}

fn export(e: csv::Error) -> NetsimError {
    NetsimError::Export(e.to_string())
}

/// Columns `N,mode,round,CT_s,TP_Bps,PDR,detected_attacks,identified_attacker`.
pub fn write_rounds_csv<W: Write>(out: W, rows: &[RoundOutcome]) -> Result<(), NetsimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "mode", "round", "CT_s", "TP_Bps", "PDR", "detected_attacks", "identified_attacker"])
        .map_err(export)?;
    for r in rows {
        w.write_record([
            r.nodes.to_string(),
            r.mode.to_string(),
            r.round.to_string(),
            format!("{:.6}", r.metrics.ct_s),
            format!("{:.3}", r.metrics.tp_bps),
            format!("{:.6}", r.metrics.pdr),
            r.detections.len().to_string(),
            r.identified().map(|n| n.to_string()).unwrap_or_default(),
        ])
        .map_err(export)?;
    }
    w.flush().map_err(|e| NetsimError::Export(e.to_string()))
}

/// Columns `N,mode,rounds,CT_mean_s,CT_std_s,TP_mean_Bps,TP_std_Bps,PDR_mean,PDR_std`.
pub fn write_summary_csv<W: Write>(out: W, rows: &[CampaignSummary]) -> Result<(), NetsimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "N",
        "mode",
        "rounds",
        "CT_mean_s",
        "CT_std_s",
        "TP_mean_Bps",
        "TP_std_Bps",
        "PDR_mean",
        "PDR_std",
    ])
    .map_err(export)?;
    for s in rows {
        w.write_record([
            s.nodes.to_string(),
            s.mode.to_string(),
            s.rounds.to_string(),
            format!("{:.6}", s.ct_s.mean),
            format!("{:.6}", s.ct_s.std),
            format!("{:.3}", s.tp_bps.mean),
            format!("{:.3}", s.tp_bps.std),
            format!("{:.6}", s.pdr.mean),
            format!("{:.6}", s.pdr.std),
        ])
        .map_err(export)?;
    }
    w.flush().map_err(|e| NetsimError::Export(e.to_string()))
}

/// Runs a scenario on one configuration; rounds before activation are honest.
pub fn inject_attack(config: &SimConfig, scenario: &AttackScenario) -> Result<Vec<RoundOutcome>, NetsimError> {
    let mut sim = Simulation::new(config.clone())?;
    scenario.validate(sim.topology())?;
    (0..=scenario.activation_round)
        .map(|r| sim.run_round(r, Some(scenario)))
        .collect()
}
