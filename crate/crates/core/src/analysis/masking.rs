use super::AnalysisError;
use crate::crypto::hmac_full;
use crate::field::{PrimeField, Scalar};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskPolicy {
    /// A new one-time mask per encryption, as the protocol requires.
    Fresh,
    /// One mask for every encryption. Negative control only.
    ReuseSingle,
}

/// Fixed distinguisher family. Each sees the challenge and one reference
/// encryption of `r0` obtained from the encryption oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distinguisher {
    /// Guesses 0 exactly when the challenge equals the reference.
    Equality,
    /// Guesses by which side of the reference the challenge falls on.
    Order,
    /// Guesses from the parity of challenge minus reference.
    LowBit,
    /// Guesses the reading whose offset from `r0` is closest to the
    /// centred difference challenge minus reference.
    Mean,
}

impl Distinguisher {
    pub const ALL: [Distinguisher; 4] = [
        Distinguisher::Equality,
        Distinguisher::Order,
        Distinguisher::LowBit,
        Distinguisher::Mean,
    ];

    fn guess(self, field: &PrimeField, r0: u64, r1: u64, challenge: Scalar, reference: Scalar) -> u8 {
        let diff = field.sub(challenge, reference).value();
        let p = field.modulus();
        let want = (r1 as i128) - (r0 as i128);
        match self {
            Distinguisher::Equality => u8::from(diff != 0),
            Distinguisher::Order => {
                let above = challenge.value() > reference.value();
                u8::from(above == (r1 > r0))
            }
            Distinguisher::LowBit => u8::from((diff & 1) as i128 == want.rem_euclid(2)),
            Distinguisher::Mean => {
                let centred = if diff > p / 2 { diff as i128 - p as i128 } else { diff as i128 };
                u8::from((centred - want).abs() < centred.abs())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndistinguishabilityReport {
    pub samples: u64,
    pub policy: MaskPolicy,
    /// `(distinguisher, |Pr[correct] - 1/2|)` for each member of the family.
    pub per_test: Vec<(Distinguisher, f64)>,
    /// Largest advantage over the family.
    pub advantage: f64,
    /// Standard deviation of one test's advantage under the null.
    pub sigma: f64,
}

impl IndistinguishabilityReport {
    pub fn within_sigmas(&self, k: f64) -> bool {
        self.advantage <= k * self.sigma
    }
}

/// Runs the masking game empirically: each sample flips `b`, masks `r_b`
/// and asks every distinguisher for a guess.
pub fn masking_ind_test(
    field: &PrimeField,
    r0: u64,
    r1: u64,
    r_max: u64,
    samples: u64,
    policy: MaskPolicy,
    seed: u64,
) -> Result<IndistinguishabilityReport, AnalysisError> {
    if r0 > r_max || r1 > r_max {
        return Err(AnalysisError::Parameter(format!("readings must lie in [0, {r_max}]")));
    }
    if samples == 0 {
        return Err(AnalysisError::Parameter("samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracle = MaskOracle::new(field, policy, &mut rng)?;
    let mut correct = [0u64; Distinguisher::ALL.len()];
    for _ in 0..samples {
        let reference = field.add(Scalar::from(r0), oracle.next(&mut rng)?);
        let b: u8 = rng.gen_range(0..2);
        let r = if b == 0 { r0 } else { r1 };
        let challenge = field.add(Scalar::from(r), oracle.next(&mut rng)?);
        for (i, d) in Distinguisher::ALL.iter().enumerate() {
            if d.guess(field, r0, r1, challenge, reference) == b {
                correct[i] += 1;
            }
        }
    }
    let per_test: Vec<(Distinguisher, f64)> = Distinguisher::ALL
        .iter()
        .zip(correct)
        .map(|(&d, c)| (d, (c as f64 / samples as f64 - 0.5).abs()))
        .collect();
    let advantage = per_test.iter().map(|(_, a)| *a).fold(0.0, f64::max);
    Ok(IndistinguishabilityReport {
        samples,
        policy,
        per_test,
        advantage,
        sigma: 0.5 / (samples as f64).sqrt(),
    })
}

struct MaskOracle<'a> {
    field: &'a PrimeField,
    policy: MaskPolicy,
    fixed: Scalar,
    seen: HashSet<Scalar>,
}

impl<'a> MaskOracle<'a> {
    fn new<R: RngCore>(field: &'a PrimeField, policy: MaskPolicy, rng: &mut R) -> Result<Self, AnalysisError> {
        let mut oracle = MaskOracle {
            field,
            policy,
            fixed: Scalar::ZERO,
            seen: HashSet::new(),
        };
        oracle.fixed = oracle.derive(rng)?;
        Ok(oracle)
    }

    /// HMAC of a counter under a fresh random key, reduced into the field.
    fn derive<R: RngCore>(&self, rng: &mut R) -> Result<Scalar, AnalysisError> {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let out = hmac_full(&key, b"mask").map_err(|e| AnalysisError::Parameter(e.to_string()))?;
        Ok(self.field.reduce_bytes(&out))
    }

    fn next<R: RngCore>(&mut self, rng: &mut R) -> Result<Scalar, AnalysisError> {
        match self.policy {
            MaskPolicy::ReuseSingle => Ok(self.fixed),
            MaskPolicy::Fresh => {
                let s = self.derive(rng)?;
                if !self.seen.insert(s) {
                    return Err(AnalysisError::MaskReuse);
                }
                Ok(s)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> PrimeField {
        PrimeField::new((1u128 << 127) - 1).unwrap()
    }

    #[test]
    fn equal_readings_give_no_advantage_signal() {
        let r = masking_ind_test(&field(), 42, 42, 100, 20_000, MaskPolicy::Fresh, 1).unwrap();
        assert!(r.within_sigmas(4.0), "{r:?}");
    }

    #[test]
    fn reuse_is_caught_by_equality() {
        let r = masking_ind_test(&field(), 0, 10_000, 10_000, 2_000, MaskPolicy::ReuseSingle, 2).unwrap();
        assert_eq!(r.advantage, 0.5);
    }

    #[test]
    fn fresh_masks_hide_extremes() {
        let r = masking_ind_test(&field(), 0, 10_000, 10_000, 20_000, MaskPolicy::Fresh, 3).unwrap();
        assert!(r.within_sigmas(4.0), "{r:?}");
    }

    #[test]
    fn parameter_checks() {
        assert!(masking_ind_test(&field(), 0, 11, 10, 10, MaskPolicy::Fresh, 0).is_err());
        assert!(masking_ind_test(&field(), 0, 1, 10, 0, MaskPolicy::Fresh, 0).is_err());
    }
}
