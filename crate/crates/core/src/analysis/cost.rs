use super::AnalysisError;
use crate::crypto::{homomorphic_hash, GroupBackend, MacTag, Signature};
use crate::field::Scalar;
use crate::protocol::Report;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Per-operation timings in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    /// Pairing.
    pub t1: f64,
    /// Target-group multiplication.
    pub t2: f64,
    /// Signature addition in G1.
    pub t3: f64,
    /// Hash to G1.
    pub t4: f64,
    /// Scalar multiplication in G1.
    pub t5: f64,
    /// Homomorphic hash of one reading.
    pub t6: f64,
    /// Homomorphic hash addition.
    pub t7: f64,
    /// HMAC.
    pub t8: f64,
    pub t9: f64,
    pub t10: f64,
    pub t11: f64,
    pub t12: f64,
    pub t13: f64,
    pub t14: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            t1: 1.025,
            t2: 1.22e-3,
            t3: 4.4e-3,
            t4: 0.05,
            t5: 1.44,
            t6: 1.3,
            t7: 1.31e-3,
            t8: 1.58e-3,
            t9: 5.88,
            t10: 1.36e-3,
            t11: 19.47,
            t12: 18.88,
            t13: 19.9e-3,
            t14: 24.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Entity {
    Meter,
    Gateway,
    Utility,
}

impl Entity {
    pub const ALL: [Entity; 3] = [Entity::Meter, Entity::Gateway, Entity::Utility];

    pub fn as_str(self) -> &'static str {
        match self {
            Entity::Meter => "sm",
            Entity::Gateway => "gateway",
            Entity::Utility => "utility",
        }
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Entity {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sm" | "meter" => Ok(Entity::Meter),
            "gateway" | "gw" => Ok(Entity::Gateway),
            "utility" | "u" => Ok(Entity::Utility),
            _ => Err(AnalysisError::UnknownEntity(s.to_string())),
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let all = [
            self.t1, self.t2, self.t3, self.t4, self.t5, self.t6, self.t7, self.t8, self.t9, self.t10, self.t11,
            self.t12, self.t13, self.t14,
        ];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            Err(AnalysisError::Parameter("cost constants must be positive".into()))
        }
    }

    pub fn sign(&self) -> f64 {
        self.t4 + self.t5
    }

    /// Two pairings plus hashing the message to G1.
    pub fn verify(&self) -> f64 {
        2.0 * self.t1 + self.t4
    }

    /// Batch verification of `k` signatures on distinct messages.
    pub fn batch_verify(&self, k: usize) -> f64 {
        let k = k as f64;
        (k + 1.0) * self.t1 + (k - 1.0) * self.t2 + (k - 1.0) * self.t3 + k * self.t4
    }

    /// Batch check of `k` hashes against one aggregate.
    pub fn batch_hash_check(&self, k: usize) -> f64 {
        self.t6 + (k as f64 - 1.0) * self.t7
    }

    /// Hash, MAC and sign one report.
    pub fn report(&self) -> f64 {
        self.t6 + self.t8 + self.sign()
    }
}

/// Processing time in milliseconds for one aggregation round with `n` meters
/// reporting directly to the gateway.
pub fn computation_cost(entity: Entity, n: usize, model: &CostModel) -> Result<f64, AnalysisError> {
    model.validate()?;
    if n == 0 {
        return Err(AnalysisError::Parameter("n must be at least 1".into()));
    }
    Ok(match entity {
        Entity::Meter => model.report(),
        Entity::Gateway => model.batch_verify(n) + model.batch_hash_check(n) + model.report(),
        Entity::Utility => model.verify() + n as f64 * model.t8 + model.t7,
    })
}

/// Linear fit `slope * n + intercept` of an entity's cost, from two exact
/// evaluations.
pub fn cost_line(entity: Entity, model: &CostModel) -> Result<(f64, f64), AnalysisError> {
    let a = computation_cost(entity, 1, model)?;
    let b = computation_cost(entity, 2, model)?;
    Ok((b - a, a - (b - a)))
}

/// Encoded size of a report carrying `hashes` homomorphic hashes, measured by
/// serialising one.
pub fn report_size<B: GroupBackend>(backend: &B, hashes: usize) -> Result<usize, AnalysisError> {
    if hashes == 0 {
        return Err(AnalysisError::Parameter("a report carries at least one hash".into()));
    }
    let h = homomorphic_hash(backend, &[Scalar::ONE]).map_err(|e| AnalysisError::Parameter(e.to_string()))?;
    let report = Report::<B> {
        masked: Scalar::ZERO,
        ts: 0,
        hashes: vec![h; hashes],
        mac: MacTag::ZERO,
        sig: Signature {
            sigma: backend.g1_generator(),
        },
    };
    Ok(report.encode(backend).len())
}

/// Bytes an entity sends per round: a meter's leaf report, the gateway's
/// report for `n` meters. The utility sends nothing.
pub fn message_size<B: GroupBackend>(backend: &B, entity: Entity, n: usize) -> Result<usize, AnalysisError> {
    match entity {
        Entity::Meter => report_size(backend, 1),
        Entity::Gateway => report_size(backend, n),
        Entity::Utility => Ok(0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadRow {
    pub entity: Entity,
    pub n: usize,
    pub computation_ms: f64,
    pub message_bytes: usize,
}

pub fn overhead_report<B: GroupBackend>(
    backend: &B,
    model: &CostModel,
    entities: &[Entity],
    ns: &[usize],
) -> Result<Vec<OverheadRow>, AnalysisError> {
    let mut out = Vec::new();
    for &entity in entities {
        for &n in ns {
            out.push(OverheadRow {
                entity,
                n,
                computation_ms: computation_cost(entity, n, model)?,
                message_bytes: message_size(backend, entity, n)?,
            });
        }
    }
    Ok(out)
}
