use super::AnalysisError;
use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Size of the population proxies are drawn from, relative to `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolSize {
    N,
    #[default]
    NPlusOne,
    NPlusTwo,
}

impl PoolSize {
    pub fn size(self, n: u64) -> u64 {
        match self {
            PoolSize::N => n,
            PoolSize::NPlusOne => n + 1,
            PoolSize::NPlusTwo => n + 2,
        }
    }
}

impl std::str::FromStr for PoolSize {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" => Ok(PoolSize::N),
            "n+1" => Ok(PoolSize::NPlusOne),
            "n+2" => Ok(PoolSize::NPlusTwo),
            _ => Err(AnalysisError::Parameter(format!("unknown pool size {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollusionModel {
    pub n: u64,
    pub m: u64,
    pub lambda: u64,
    pub pool: PoolSize,
}

impl CollusionModel {
    pub fn new(n: u64, m: u64, lambda: u64) -> Result<Self, AnalysisError> {
        Self::with_pool(n, m, lambda, PoolSize::default())
    }

    pub fn with_pool(n: u64, m: u64, lambda: u64, pool: PoolSize) -> Result<Self, AnalysisError> {
        let model = CollusionModel { n, m, lambda, pool };
        model.validate()?;
        Ok(model)
    }

    pub fn pool_size(&self) -> u64 {
        self.pool.size(self.n)
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        if self.m > self.n {
            return Err(AnalysisError::Parameter(format!("m = {} exceeds n = {}", self.m, self.n)));
        }
        if self.lambda == 0 || self.lambda > self.pool_size() {
            return Err(AnalysisError::Parameter(format!(
                "lambda = {} outside [1, {}]",
                self.lambda,
                self.pool_size()
            )));
        }
        Ok(())
    }

    /// Probability that one benign meter draws all of its proxies from the
    /// colluding set.
    pub fn capture_probability(&self) -> f64 {
        big_ratio(&binomial(self.m, self.lambda), &binomial(self.pool_size(), self.lambda))
    }
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// `num / den` for `num <= den`, keeping 64 significant bits of the quotient.
fn big_ratio(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = den.bits() - num.bits() + 64;
    let q = ((num << shift) / den).to_f64().expect("quotient fits in f64");
    let mut out = q;
    let mut s = shift;
    while s > 0 {
        let step = s.min(1000);
        out *= 2f64.powi(-(step as i32));
        s -= step;
    }
    out
}

/// Probability that at least one of the `n - m` benign meters has every proxy
/// among the `m` colluders.
pub fn collusion_probability(model: &CollusionModel) -> Result<f64, AnalysisError> {
    model.validate()?;
    let r = model.capture_probability();
    if r == 0.0 || model.m == model.n {
        return Ok(0.0);
    }
    if r >= 1.0 {
        return Ok(1.0);
    }
    let benign = (model.n - model.m) as f64;
    Ok((-(benign * (-r).ln_1p()).exp_m1()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub trials: u64,
    pub hits: u64,
    pub estimate: f64,
    pub std_error: f64,
}

const CHUNK: u64 = 8192;

/// Draws proxy sets for every benign meter in each trial and counts trials in
/// which some benign meter is fully captured. Chunks run in parallel, each on
/// its own ChaCha stream, so the result depends only on `seed`.
pub fn collusion_monte_carlo(model: &CollusionModel, trials: u64, seed: u64) -> Result<MonteCarloEstimate, AnalysisError> {
    model.validate()?;
    if trials == 0 {
        return Err(AnalysisError::Parameter("trials must be at least 1".into()));
    }
    let pool = model.pool_size();
    let benign = model.n - model.m;
    let chunks = trials.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let count = CHUNK.min(trials - c * CHUNK);
            (0..count)
                .filter(|_| (0..benign).any(|_| draws_all_malicious(&mut rng, pool, model.m, model.lambda)))
                .count() as u64
        })
        .sum();
    let p = hits as f64 / trials as f64;
    Ok(MonteCarloEstimate {
        trials,
        hits,
        estimate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
    })
}

fn draws_all_malicious<R: Rng>(rng: &mut R, pool: u64, malicious: u64, lambda: u64) -> bool {
    // Sequential sampling without replacement; only the class of each draw matters.
    (0..lambda).all(|k| malicious > k && rng.gen_range(0..pool - k) < malicious - k)
}

/// Smallest proxy count keeping the collusion probability at or below `epsilon`.
pub fn proxies_needed(n: u64, m: u64, epsilon: f64, pool: PoolSize) -> Result<u64, AnalysisError> {
    if m >= n || !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(AnalysisError::Parameter(format!("need 0 <= m < n and 0 < epsilon < 1 (n={n}, m={m}, epsilon={epsilon})")));
    }
    for lambda in 1..=pool.size(n) {
        let model = CollusionModel::with_pool(n, m, lambda, pool)?;
        if collusion_probability(&model)? <= epsilon {
            return Ok(lambda);
        }
    }
    Err(AnalysisError::Infeasible { n, m, epsilon })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollusionPoint {
    pub m: u64,
    pub lambda: u64,
    pub probability: f64,
}

/// P against m for each proxy count at fixed n.
pub fn collusion_curve(n: u64, lambdas: &[u64], ms: &[u64], pool: PoolSize) -> Result<Vec<CollusionPoint>, AnalysisError> {
    let mut out = Vec::with_capacity(lambdas.len() * ms.len());
    for &lambda in lambdas {
        for &m in ms {
            let model = CollusionModel::with_pool(n, m, lambda, pool)?;
            out.push(CollusionPoint {
                m,
                lambda,
                probability: collusion_probability(&model)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProxyPlanPoint {
    pub n: u64,
    pub m_over_n: f64,
    pub lambda_min: u64,
}

/// Minimal proxy counts over network sizes and colluder ratios.
pub fn proxy_plan(ns: &[u64], ratios: &[f64], epsilon: f64, pool: PoolSize) -> Result<Vec<ProxyPlanPoint>, AnalysisError> {
    let mut out = Vec::with_capacity(ns.len() * ratios.len());
    for &ratio in ratios {
        for &n in ns {
            let m = (ratio * n as f64).round() as u64;
            out.push(ProxyPlanPoint {
                n,
                m_over_n: ratio,
                lambda_min: proxies_needed(n, m, epsilon, pool)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u64, m: u64, l: u64) -> f64 {
        collusion_probability(&CollusionModel::new(n, m, l).unwrap()).unwrap()
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), BigUint::from(10u32));
        assert_eq!(binomial(3, 5), BigUint::zero());
        assert_eq!(binomial(201, 8).to_string(), "57382892391825");
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(p(200, 0, 8), 0.0);
        assert_eq!(p(200, 5, 8), 0.0);
        assert!(CollusionModel::new(10, 3, 12).is_err());
        assert!(CollusionModel::new(10, 11, 2).is_err());
        assert_eq!(proxies_needed(50, 0, 0.01, PoolSize::default()).unwrap(), 1);
    }

    #[test]
    fn small_case_matches_direct_formula() {
        // n=20, m=10, lambda=2: r = C(10,2)/C(21,2) = 45/210.
        let r: f64 = 45.0 / 210.0;
        let want = 1.0 - (1.0 - r).powi(10);
        assert!((p(20, 10, 2) - want).abs() < 1e-12);
    }

    #[test]
    fn monotone_over_grid() {
        for n in [20u64, 60, 150] {
            for l in 1..=10 {
                let mut prev = 0.0;
                for m in 0..=n * 3 / 5 {
                    let cur = p(n, m, l);
                    assert!((0.0..=1.0).contains(&cur));
                    assert!(cur + 1e-15 >= prev, "n={n} l={l} m={m}");
                    prev = cur;
                }
            }
            for m in 0..n {
                for l in 1..12 {
                    assert!(p(n, m, l + 1) <= p(n, m, l) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn probability_returns_to_zero_without_benign_meters() {
        // With few benign meters left the product has few factors.
        assert!(p(20, 13, 1) < p(20, 12, 1));
        assert_eq!(p(20, 20, 1), 0.0);
        assert_eq!(proxies_needed(10, 9, 1e-9, PoolSize::N).unwrap(), 10);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_close() {
        let model = CollusionModel::new(20, 10, 2).unwrap();
        let a = collusion_monte_carlo(&model, 100_000, 9).unwrap();
        let b = collusion_monte_carlo(&model, 100_000, 9).unwrap();
        assert_eq!(a, b);
        let exact = collusion_probability(&model).unwrap();
        assert!((a.estimate - exact).abs() <= 3.0 * a.std_error.max(1e-9));
        let zero = collusion_monte_carlo(&CollusionModel::new(20, 0, 2).unwrap(), 1000, 1).unwrap();
        assert_eq!(zero.hits, 0);
    }
}
