//! Collusion-probability models, proxy planning, the operation cost model
//! and an empirical masking-indistinguishability check.

mod collusion;
mod cost;
mod masking;

pub use collusion::{
    binomial, collusion_curve, collusion_monte_carlo, collusion_probability, proxies_needed, proxy_plan,
    CollusionModel, CollusionPoint, MonteCarloEstimate, PoolSize, ProxyPlanPoint,
};
pub use cost::{
    computation_cost, cost_line, message_size, overhead_report, report_size, CostModel, Entity, OverheadRow,
};
pub use masking::{masking_ind_test, Distinguisher, IndistinguishabilityReport, MaskPolicy};

use std::io::Write;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no proxy count reaches probability {epsilon} with n = {n}, m = {m}")]
    Infeasible { n: u64, m: u64, epsilon: f64 },
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("a one-time mask was used twice")]
    MaskReuse,
    #[error("csv export failed: {0}")]
    Export(String),
}

fn export_err(e: csv::Error) -> AnalysisError {
    AnalysisError::Export(e.to_string())
}

/// Columns `m,lambda,P`.
pub fn write_collusion_csv<W: Write>(out: W, points: &[CollusionPoint]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "lambda", "P"]).map_err(export_err)?;
    for p in points {
        w.write_record([p.m.to_string(), p.lambda.to_string(), format!("{:.6}", p.probability)])
            .map_err(export_err)?;
    }
    w.flush().map_err(|e| AnalysisError::Export(e.to_string()))
}

/// Columns `n,m_over_n,lambda_min`.
pub fn write_proxy_plan_csv<W: Write>(out: W, points: &[ProxyPlanPoint]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "m_over_n", "lambda_min"]).map_err(export_err)?;
    for p in points {
        w.write_record([p.n.to_string(), format!("{:.4}", p.m_over_n), p.lambda_min.to_string()])
            .map_err(export_err)?;
    }
    w.flush().map_err(|e| AnalysisError::Export(e.to_string()))
}

/// Columns `entity,n,computation_ms,message_bytes`.
pub fn write_overhead_csv<W: Write>(out: W, rows: &[OverheadRow]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["entity", "n", "computation_ms", "message_bytes"]).map_err(export_err)?;
    for r in rows {
        w.write_record([
            r.entity.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.computation_ms),
            r.message_bytes.to_string(),
        ])
        .map_err(export_err)?;
    }
    w.flush().map_err(|e| AnalysisError::Export(e.to_string()))
}
