//! Closed-form variance and convergence bounds, and Monte-Carlo
//! estimators of the aggregation error they bound.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::AggregationRule;
use crate::attacks::{AttackKind, AttackSpec};
use crate::batch::GradientBatch;
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

fn check_variance(v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("V must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// Krum error bound under `q` Byzantine rows. Requires `2q + 2 < m`.
pub fn delta0(m: usize, q: usize, v: f64) -> Result<f64> {
    check_variance(v)?;
    if 2 * q + 2 >= m {
        return Err(Error::constraint(format!(
            "2q+2<m violated: 2*{q}+2 = {} >= m = {m}",
            2 * q + 2
        )));
    }
    let (m, q) = (m as f64, q as f64);
    let frac = (4.0 * q * (m - q - 2.0) + 4.0 * q * q * (m - q - 1.0)) / (m - 2.0 * q - 2.0);
    Ok((6.0 * m - 6.0 * q + frac) * v)
}

fn check_trim_bound(m: usize, q: usize, b: usize) -> Result<()> {
    if 2 * q >= m {
        return Err(Error::constraint(format!("2q<m violated: 2*{q} >= m = {m}")));
    }
    if b < q {
        return Err(Error::constraint(format!("b>=q violated: b = {b} < q = {q}")));
    }
    if b + q >= m {
        return Err(Error::constraint(format!("m-b-q>0 violated: m-b-q = {m}-{b}-{q} <= 0")));
    }
    if 2 * b >= m {
        return Err(Error::constraint(format!(
            "b<=ceil(m/2)-1 violated: b = {b}, m = {m}"
        )));
    }
    Ok(())
}

/// Trimmed-mean error bound with `q` Byzantine values per coordinate.
/// Requires `2q < m`, `q <= b` and `m - b - q > 0`.
pub fn delta1(m: usize, q: usize, b: usize, v: f64) -> Result<f64> {
    check_variance(v)?;
    check_trim_bound(m, q, b)?;
    let (m, q, b) = (m as f64, q as f64, b as f64);
    Ok(2.0 * (b + 1.0) * (m - q) / ((m - b - q) * (m - b - q)) * v)
}

/// Phocas error bound; same preconditions as [`delta1`].
pub fn delta2(m: usize, q: usize, b: usize, v: f64) -> Result<f64> {
    check_variance(v)?;
    check_trim_bound(m, q, b)?;
    let (m, q, b) = (m as f64, q as f64, b as f64);
    Ok((4.0 + 12.0 * (b + 1.0) * (m - q) / ((m - b - q) * (m - b - q))) * v)
}

/// Linear convergence to a ball for strongly convex objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    /// Per-step contraction `1 - gamma*mu*L/(mu+L)`.
    pub rate: f64,
    /// Asymptotic radius `(mu+L)/(mu*L) * gamma * sqrt(delta)`.
    pub radius: f64,
}

impl Residual {
    /// `rate^t * dist0 + radius`.
    pub fn bound(&self, t: usize, dist0: f64) -> f64 {
        self.rate.powi(t as i32) * dist0 + self.radius
    }
}

/// Requires `0 < mu <= L` and `gamma <= 2/(mu+L)`.
pub fn strongly_convex_residual(mu: f64, l: f64, gamma: f64, delta: f64) -> Result<Residual> {
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(Error::constraint(format!("0<mu<=L violated: mu = {mu}, L = {l}")));
    }
    if !(gamma > 0.0 && gamma <= 2.0 / (mu + l)) {
        return Err(Error::constraint(format!(
            "gamma<=2/(mu+L) violated: gamma = {gamma}, 2/(mu+L) = {}",
            2.0 / (mu + l)
        )));
    }
    check_variance(delta)?;
    Ok(Residual {
        rate: 1.0 - gamma * mu * l / (mu + l),
        radius: (mu + l) / (mu * l) * gamma * delta.sqrt(),
    })
}

/// Bound on the average squared gradient norm over `t` rounds of an
/// `L`-smooth objective: `2*gap0/(gamma*t) + delta`. Requires
/// `gamma <= 1/L`.
pub fn smooth_gradient_bound(l: f64, gamma: f64, t: usize, gap0: f64, delta: f64) -> Result<f64> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::constraint(format!("L must be positive, got {l}")));
    }
    if !(gamma > 0.0 && gamma <= 1.0 / l) {
        return Err(Error::constraint(format!(
            "gamma<=1/L violated: gamma = {gamma}, 1/L = {}",
            1.0 / l
        )));
    }
    if t == 0 {
        return Err(Error::invalid("T must be >= 1"));
    }
    if gap0.is_nan() || gap0 < 0.0 {
        return Err(Error::invalid(format!("gap0 must be >= 0, got {gap0}")));
    }
    check_variance(delta)?;
    Ok(2.0 / (gamma * t as f64) * gap0 + delta)
}

/// All three error bounds for one `(m, q, b, V)`; a bound whose
/// preconditions fail is `None` with the reason recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub delta0: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub reasons: BTreeMap<String, String>,
}

pub fn bound_report(m: usize, q: usize, b: usize, v: f64) -> BoundReport {
    let mut reasons = BTreeMap::new();
    let mut keep = |name: &str, r: Result<f64>| match r {
        Ok(x) => Some(x),
        Err(e) => {
            reasons.insert(name.to_string(), e.to_string());
            None
        }
    };
    let delta0 = keep("delta0", delta0(m, q, v));
    let delta1 = keep("delta1", delta1(m, q, b, v));
    let delta2 = keep("delta2", delta2(m, q, b, v));
    BoundReport {
        delta0,
        delta1,
        delta2,
        reasons,
    }
}

/// Correct rows `g + sigma * N(0, I)`: total variance `V = d * sigma^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub m: usize,
    pub g: Vec<f64>,
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(m: usize, g: Vec<f64>, sigma: f64) -> Result<Self> {
        if m == 0 || g.is_empty() {
            return Err(Error::invalid("noise model needs m >= 1 and d >= 1"));
        }
        Ok(Self { m, g, sigma })
    }

    pub fn d(&self) -> usize {
        self.g.len()
    }

    /// Total variance of one correct row.
    pub fn variance(&self) -> f64 {
        self.d() as f64 * self.sigma * self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GradientBatch {
        let data = (0..self.m)
            .flat_map(|_| self.g.iter())
            .map(|&gj| {
                let z: f64 = StandardNormal.sample(rng);
                gj + self.sigma * z
            })
            .collect();
        GradientBatch::from_flat(data, self.m, self.d()).expect("shape is consistent")
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

impl Estimate {
    /// From per-trial values, combined by pairwise summation.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("need at least one trial"));
        }
        let n = values.len() as f64;
        let mean = pairwise_sum(values) / n;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if values.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
        Ok(Self {
            mean,
            std_err: (var / n).sqrt(),
            trials: values.len(),
        })
    }

    /// Fails only when `mean - 3 * std_err` exceeds `bound`.
    pub fn consistent_with(&self, bound: f64) -> bool {
        self.mean - 3.0 * self.std_err <= bound
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().fold(0.0, |a, v| a + v);
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// `|a - b|^2`.
pub fn sq_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y))
}

/// Applies `attack` to one trial. The extreme-value attack alternates the
/// sign of its magnitude between even and odd trials.
pub fn attack_trial<R: Rng + ?Sized>(
    attack: &AttackSpec,
    batch: &GradientBatch,
    trial: usize,
    rng: &mut R,
) -> Result<GradientBatch> {
    if attack.kind == AttackKind::ExtremeValue && trial % 2 == 1 {
        let flipped = AttackSpec {
            magnitude: -attack.magnitude,
            ..attack.clone()
        };
        return flipped.apply(batch, rng).map(|(b, _)| b);
    }
    attack.apply(batch, rng).map(|(b, _)| b)
}

/// Per-trial squared errors `|rule(attacked batch) - g|^2`. Trials run in
/// parallel, each on its own keyed stream, and come back in trial order.
pub fn sq_error_trials(
    rule: &AggregationRule,
    attack: &AttackSpec,
    noise: &NoiseModel,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    rule.validate(noise.m)?;
    attack.validate(noise.m)?;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let clean = noise.sample(&mut substream(seed, Purpose::Trial, &[t as u64, 0]));
            let attacked = attack_trial(attack, &clean, t, &mut substream(seed, Purpose::Trial, &[t as u64, 1]))?;
            Ok(sq_error(&rule.apply(&attacked)?.vector, &noise.g))
        })
        .collect()
}

/// Monte-Carlo estimate of `E|rule(attacked batch) - g|^2`.
pub fn empirical_sq_error(
    rule: &AggregationRule,
    attack: &AttackSpec,
    noise: &NoiseModel,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    Estimate::from_values(&sq_error_trials(rule, attack, noise, trials, seed)?)
}
