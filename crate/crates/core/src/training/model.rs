//! Loss models: a noisy quadratic, multinomial logistic regression and a
//! one-hidden-layer ReLU network.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// A batch of samples stored row-major.
///
/// For classification models a row is a feature vector and `labels` holds
/// class indices. For the quadratic model a row is a gradient-noise vector
/// and labels are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl Samples {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                actual: features.len(),
            });
        }
        Ok(Self { features, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Samples `range` as a new batch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            features: self.features[range.start * self.dim..range.end * self.dim].to_vec(),
            labels: self.labels[range].to_vec(),
            dim: self.dim,
        }
    }
}

/// Model section of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `F(x) = 0.5 * |x - x*|^2`; `mu = L = 1`.
    Quadratic {
        dim: usize,
        /// Defaults to the origin.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        optimum: Option<Vec<f64>>,
        /// Distance of the random start from the optimum.
        #[serde(default = "default_init_distance")]
        init_distance: f64,
    },
    /// Softmax regression with a bias per class.
    Logistic,
    /// One hidden ReLU layer.
    TinyMlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
}

fn default_init_distance() -> f64 {
    10.0
}

fn default_hidden() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Quadratic,
    Logistic,
    TinyMlp,
}

/// A concrete model: its shape plus the known curvature constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: LossKind,
    features: usize,
    classes: usize,
    hidden: usize,
    x_star: Option<Vec<f64>>,
    init_distance: f64,
    /// Smoothness constant, if known or estimated.
    pub smoothness: Option<f64>,
    /// Strong-convexity constant (0 when not strongly convex).
    pub strong_convexity: f64,
}

impl Model {
    pub fn quadratic(dim: usize, optimum: Option<Vec<f64>>, init_distance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("quadratic model needs dim >= 1"));
        }
        let x_star = optimum.unwrap_or_else(|| vec![0.0; dim]);
        if x_star.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x_star.len(),
            });
        }
        Ok(Self {
            kind: LossKind::Quadratic,
            features: dim,
            classes: 0,
            hidden: 0,
            x_star: Some(x_star),
            init_distance,
            smoothness: Some(1.0),
            strong_convexity: 1.0,
        })
    }

    pub fn logistic(features: usize, classes: usize) -> Result<Self> {
        if features == 0 || classes < 2 {
            return Err(Error::invalid("logistic model needs >= 1 feature and >= 2 classes"));
        }
        Ok(Self {
            kind: LossKind::Logistic,
            features,
            classes,
            hidden: 0,
            x_star: None,
            init_distance: 0.0,
            smoothness: None,
            strong_convexity: 0.0,
        })
    }

    pub fn tiny_mlp(features: usize, hidden: usize, classes: usize) -> Result<Self> {
        if features == 0 || hidden == 0 || classes < 2 {
            return Err(Error::invalid("MLP needs >= 1 feature, >= 1 hidden unit and >= 2 classes"));
        }
        Ok(Self {
            kind: LossKind::TinyMlp,
            features,
            classes,
            hidden,
            x_star: None,
            init_distance: 0.0,
            smoothness: None,
            strong_convexity: 0.0,
        })
    }

    /// Builds the model described by `spec` for data with the given shape.
    pub fn from_spec(spec: &ModelSpec, features: usize, classes: usize) -> Result<Self> {
        match spec {
            ModelSpec::Quadratic {
                dim,
                optimum,
                init_distance,
            } => Self::quadratic(*dim, optimum.clone(), *init_distance),
            ModelSpec::Logistic => Self::logistic(features, classes),
            ModelSpec::TinyMlp { hidden } => Self::tiny_mlp(features, *hidden, classes),
        }
    }

    /// Number of parameters.
    pub fn dim(&self) -> usize {
        match self.kind {
            LossKind::Quadratic => self.features,
            LossKind::Logistic => self.classes * (self.features + 1),
            LossKind::TinyMlp => self.hidden * (self.features + 1) + self.classes * (self.hidden + 1),
        }
    }

    /// Width of a sample row.
    pub fn input_dim(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn optimum(&self) -> Option<&[f64]> {
        self.x_star.as_deref()
    }

    /// Starting point for a run with master seed `seed`.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, Purpose::Init, &[]);
        match self.kind {
            LossKind::Quadratic => {
                let x_star = self.x_star.as_deref().unwrap_or_default();
                let dir: Vec<f64> = (0..self.features).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().fold(0.0, |a, v| a + v * v).sqrt().max(f64::MIN_POSITIVE);
                x_star
                    .iter()
                    .zip(&dir)
                    .map(|(s, u)| s + self.init_distance * u / norm)
                    .collect()
            }
            LossKind::Logistic => vec![0.0; self.dim()],
            LossKind::TinyMlp => {
                let mut x = vec![0.0; self.dim()];
                let (w1, rest) = x.split_at_mut(self.hidden * self.features);
                let w2 = &mut rest[self.hidden..self.hidden + self.classes * self.hidden];
                fill_normal(w1, (2.0 / self.features as f64).sqrt(), &mut rng);
                fill_normal(w2, (1.0 / self.hidden as f64).sqrt(), &mut rng);
                x
            }
        }
    }

    /// Exact objective, when the model has a closed form (quadratic only).
    pub fn objective(&self, x: &[f64]) -> Option<f64> {
        let x_star = self.x_star.as_ref()?;
        Some(0.5 * sq_dist(x, x_star))
    }

    /// Exact gradient of the objective, when known (quadratic only).
    pub fn true_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let x_star = self.x_star.as_ref()?;
        Some(x.iter().zip(x_star).map(|(a, b)| a - b).collect())
    }

    fn check(&self, x: &[f64], samples: &Samples) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if samples.dim != self.features {
            return Err(Error::DimensionMismatch {
                expected: self.features,
                actual: samples.dim,
            });
        }
        if samples.is_empty() {
            return Err(Error::invalid("empty sample batch"));
        }
        if self.kind != LossKind::Quadratic && samples.labels.iter().any(|&y| y >= self.classes) {
            return Err(Error::invalid(format!("label outside 0..{}", self.classes)));
        }
        Ok(())
    }

    /// Mean per-sample loss.
    pub fn loss(&self, x: &[f64], samples: &Samples) -> Result<f64> {
        self.check(x, samples)?;
        let mut total = 0.0;
        let mut logits = vec![0.0; self.classes];
        let mut hidden = vec![0.0; self.hidden];
        for i in 0..samples.len() {
            let z = samples.row(i);
            total += match self.kind {
                LossKind::Quadratic => {
                    let x_star = self.x_star.as_deref().unwrap_or_default();
                    // per-sample loss 0.5*|x - x* + z|^2: gradient x - x* + z
                    0.5 * x
                        .iter()
                        .zip(x_star)
                        .zip(z)
                        .fold(0.0, |a, ((xi, si), zi)| a + (xi - si + zi).powi(2))
                }
                LossKind::Logistic | LossKind::TinyMlp => {
                    self.forward(x, z, &mut hidden, &mut logits);
                    log_sum_exp(&logits) - logits[samples.labels[i]]
                }
            };
        }
        Ok(total / samples.len() as f64)
    }

    /// Mean per-sample gradient.
    pub fn gradient(&self, x: &[f64], samples: &Samples) -> Result<Vec<f64>> {
        self.check(x, samples)?;
        let mut g = vec![0.0; self.dim()];
        match self.kind {
            LossKind::Quadratic => {
                let x_star = self.x_star.as_deref().unwrap_or_default();
                for i in 0..samples.len() {
                    for (((gj, xj), sj), zj) in g.iter_mut().zip(x).zip(x_star).zip(samples.row(i)) {
                        *gj += xj - sj + zj;
                    }
                }
            }
            LossKind::Logistic => {
                let k = self.features;
                let mut logits = vec![0.0; self.classes];
                for i in 0..samples.len() {
                    let z = samples.row(i);
                    self.forward(x, z, &mut [], &mut logits);
                    softmax_in_place(&mut logits);
                    logits[samples.labels[i]] -= 1.0;
                    for (c, &delta) in logits.iter().enumerate() {
                        let row = &mut g[c * (k + 1)..(c + 1) * (k + 1)];
                        for (gj, zj) in row.iter_mut().zip(z) {
                            *gj += delta * zj;
                        }
                        row[k] += delta;
                    }
                }
            }
            LossKind::TinyMlp => self.mlp_gradient(x, samples, &mut g),
        }
        let n = samples.len() as f64;
        for v in &mut g {
            *v /= n;
        }
        Ok(g)
    }

    fn mlp_gradient(&self, x: &[f64], samples: &Samples, g: &mut [f64]) {
        let (k, h, c) = (self.features, self.hidden, self.classes);
        let (w1_end, b1_end, w2_end) = (h * k, h * k + h, h * k + h + c * h);
        let w2 = &x[b1_end..w2_end];
        let mut hidden = vec![0.0; h];
        let mut logits = vec![0.0; c];
        let mut delta_h = vec![0.0; h];
        for i in 0..samples.len() {
            let z = samples.row(i);
            self.forward(x, z, &mut hidden, &mut logits);
            softmax_in_place(&mut logits);
            logits[samples.labels[i]] -= 1.0;
            delta_h.fill(0.0);
            for (ci, &d2) in logits.iter().enumerate() {
                let w2_row = &w2[ci * h..(ci + 1) * h];
                let g_row = &mut g[b1_end + ci * h..b1_end + (ci + 1) * h];
                for ((gj, &hj), (dh, &wj)) in g_row.iter_mut().zip(&hidden).zip(delta_h.iter_mut().zip(w2_row)) {
                    *gj += d2 * hj;
                    *dh += d2 * wj;
                }
                g[w2_end + ci] += d2;
            }
            for (j, &dh) in delta_h.iter().enumerate() {
                // hidden[j] > 0 exactly when the pre-activation is positive
                if hidden[j] <= 0.0 {
                    continue;
                }
                for (gj, zj) in g[j * k..(j + 1) * k].iter_mut().zip(z) {
                    *gj += dh * zj;
                }
                g[w1_end + j] += dh;
            }
        }
    }

    /// Class scores for one feature row. `hidden` is scratch space for the
    /// MLP and is left holding the post-ReLU activations.
    fn forward(&self, x: &[f64], z: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let (k, h) = (self.features, self.hidden);
        match self.kind {
            LossKind::Quadratic => {}
            LossKind::Logistic => {
                for (c, out) in logits.iter_mut().enumerate() {
                    let row = &x[c * (k + 1)..(c + 1) * (k + 1)];
                    *out = dot(&row[..k], z) + row[k];
                }
            }
            LossKind::TinyMlp => {
                let b1 = &x[h * k..h * k + h];
                for (j, out) in hidden.iter_mut().enumerate() {
                    let pre = dot(&x[j * k..(j + 1) * k], z) + b1[j];
                    *out = if pre > 0.0 { pre } else { 0.0 };
                }
                let w2 = &x[h * k + h..];
                let b2 = &w2[self.classes * h..];
                for (c, out) in logits.iter_mut().enumerate() {
                    *out = dot(&w2[c * h..(c + 1) * h], hidden) + b2[c];
                }
            }
        }
    }

    /// Predicted class of one feature row: the first maximal score, NaN
    /// scores never win; 0 when every score is NaN.
    pub fn predict(&self, x: &[f64], z: &[f64]) -> usize {
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.classes];
        self.forward(x, z, &mut hidden, &mut logits);
        let mut best = 0;
        let mut best_val = f64::NAN;
        for (c, &v) in logits.iter().enumerate() {
            if v > best_val || (best_val.is_nan() && !v.is_nan()) {
                best = c;
                best_val = v;
            }
        }
        best
    }

    /// `0.5 * lambda_max(E[z' z'^T])` with `z' = [z; 1]`, estimated from
    /// `samples` by power iteration. Bounds the Hessian of the logistic loss.
    pub fn logistic_smoothness(samples: &Samples) -> f64 {
        let k = samples.dim + 1;
        let mut second = vec![0.0; k * k];
        let mut ext = vec![1.0; k];
        for i in 0..samples.len() {
            ext[..k - 1].copy_from_slice(samples.row(i));
            for a in 0..k {
                for b in 0..k {
                    second[a * k + b] += ext[a] * ext[b];
                }
            }
        }
        let n = samples.len().max(1) as f64;
        second.iter_mut().for_each(|v| *v /= n);
        0.5 * power_iteration(&second, k)
    }
}

fn fill_normal<R: Rng + ?Sized>(out: &mut [f64], std: f64, rng: &mut R) {
    let normal = Normal::new(0.0, std).expect("finite std");
    for v in out {
        *v = normal.sample(rng);
    }
}

fn power_iteration(matrix: &[f64], k: usize) -> f64 {
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..k).map(|a| dot(&matrix[a * k..(a + 1) * k], &v)).collect();
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = dot(&v, &w);
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().fold(0.0, |a, x| a + (x - max).exp()).ln()
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}
