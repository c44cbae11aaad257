//! Aggregation rules over an m×d gradient batch.
//!
//! Every rule is a pure function of the batch. Per-coordinate sums are
//! accumulated in ascending worker-index order over the kept set, which
//! makes the fast paths comparable bit-for-bit with the reference
//! implementations in [`crate::oracle`].

mod krum;
mod select;
mod trimmed;

use serde::{Deserialize, Serialize};

use crate::batch::GradientBatch;
use crate::error::{Error, Result};

pub use krum::{krum, multi_krum, multi_krum_with, ShrinkPolicy};
pub use select::{nan_last_cmp, select_kth};
pub use trimmed::{max_trim, phocas, trimmed_mean};

/// Coordinate-wise arithmetic mean of all rows.
pub fn mean(batch: &GradientBatch) -> Vec<f64> {
    let mut out = vec![0.0; batch.d()];
    for row in batch.rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let m = batch.m() as f64;
    for o in &mut out {
        *o /= m;
    }
    out
}

/// An aggregation rule with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregationRule {
    Mean,
    /// Krum assuming `q` Byzantine workers.
    Krum { q: usize },
    /// `c` rounds of Krum; `c` defaults to `m - q - 2`, the most rounds the
    /// strict shrink rule allows.
    MultiKrum {
        q: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<usize>,
    },
    /// Coordinate-wise `b`-trimmed mean.
    Trmean { b: usize },
    /// Coordinate-wise Phocas with trim count `b`.
    Phocas { b: usize },
}

/// Result of applying a rule.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationOutput {
    pub vector: Vec<f64>,
    /// Selected worker (Krum only).
    pub chosen_index: Option<usize>,
    /// Values left out of each coordinate's average (Trmean/Phocas only).
    pub excluded_per_dim: Option<Vec<usize>>,
}

impl AggregationOutput {
    fn plain(vector: Vec<f64>) -> Self {
        Self {
            vector,
            chosen_index: None,
            excluded_per_dim: None,
        }
    }
}

impl AggregationRule {
    /// Builds a rule from its command-line name.
    pub fn from_name(
        name: &str,
        q: Option<usize>,
        b: Option<usize>,
        c: Option<usize>,
    ) -> Result<Self> {
        let need = |v: Option<usize>, flag: &str| {
            v.ok_or_else(|| Error::invalid(format!("rule `{name}` requires --{flag}")))
        };
        Ok(match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "mean" => AggregationRule::Mean,
            "krum" => AggregationRule::Krum { q: need(q, "q")? },
            "multi-krum" | "multikrum" => AggregationRule::MultiKrum { q: need(q, "q")?, c },
            "trmean" | "trimmed-mean" => AggregationRule::Trmean { b: need(b, "b")? },
            "phocas" => AggregationRule::Phocas { b: need(b, "b")? },
            other => return Err(Error::invalid(format!("unknown aggregation rule `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregationRule::Mean => "mean",
            AggregationRule::Krum { .. } => "krum",
            AggregationRule::MultiKrum { .. } => "multi-krum",
            AggregationRule::Trmean { .. } => "trmean",
            AggregationRule::Phocas { .. } => "phocas",
        }
    }

    /// Checks the rule's preconditions for a batch of `m` rows.
    pub fn validate(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::invalid("gradient batch has no rows"));
        }
        match *self {
            AggregationRule::Mean => Ok(()),
            AggregationRule::Krum { q } => krum::check_krum(m, q),
            AggregationRule::MultiKrum { q, c } => {
                krum::check_krum(m, q)?;
                let c = c.unwrap_or(m - q - 2);
                if c == 0 || c > m {
                    return Err(Error::constraint(format!(
                        "Multi-Krum requires 1 <= c <= m, got c={c}, m={m}"
                    )));
                }
                if m - (c - 1) < q + 3 {
                    return Err(Error::constraint(format!(
                        "Multi-Krum with c={c} runs out of neighbours: round {c} has {} rows, needs {}",
                        m - (c - 1),
                        q + 3
                    )));
                }
                Ok(())
            }
            AggregationRule::Trmean { b } | AggregationRule::Phocas { b } => {
                trimmed::check_trim(m, b)
            }
        }
    }

    pub fn apply(&self, batch: &GradientBatch) -> Result<AggregationOutput> {
        let m = batch.m();
        Ok(match *self {
            AggregationRule::Mean => AggregationOutput::plain(mean(batch)),
            AggregationRule::Krum { q } => {
                let (vector, idx) = krum(batch, q)?;
                AggregationOutput {
                    vector,
                    chosen_index: Some(idx),
                    excluded_per_dim: None,
                }
            }
            AggregationRule::MultiKrum { q, c } => {
                let c = c.unwrap_or(m.saturating_sub(q + 2));
                AggregationOutput::plain(multi_krum(batch, q, c)?)
            }
            AggregationRule::Trmean { b } => AggregationOutput {
                vector: trimmed_mean(batch, b)?,
                chosen_index: None,
                excluded_per_dim: Some(vec![2 * b; batch.d()]),
            },
            AggregationRule::Phocas { b } => AggregationOutput {
                vector: phocas(batch, b)?,
                chosen_index: None,
                excluded_per_dim: Some(vec![b; batch.d()]),
            },
        })
    }
}

impl std::fmt::Display for AggregationRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AggregationRule::Mean => write!(f, "mean"),
            AggregationRule::Krum { q } => write!(f, "krum(q={q})"),
            AggregationRule::MultiKrum { q, c: Some(c) } => write!(f, "multi-krum(q={q},c={c})"),
            AggregationRule::MultiKrum { q, c: None } => write!(f, "multi-krum(q={q})"),
            AggregationRule::Trmean { b } => write!(f, "trmean(b={b})"),
            AggregationRule::Phocas { b } => write!(f, "phocas(b={b})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_examples() {
        let b = GradientBatch::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(mean(&b), vec![2.0, 3.0]);
        let b = GradientBatch::from_rows(&[[5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(mean(&b), vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn mean_breaks_under_one_crafted_value() {
        // two correct values 1, one Byzantine -g - sum(correct) = -3
        let g = 1.0;
        let b = GradientBatch::from_rows(&[[1.0], [1.0], [-g - 2.0]]).unwrap();
        assert!((mean(&b)[0] - (-g / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn rule_serde_shape() {
        let r: AggregationRule = serde_json::from_str(r#"{"kind":"phocas","b":8}"#).unwrap();
        assert_eq!(r, AggregationRule::Phocas { b: 8 });
        let r: AggregationRule = serde_json::from_str(r#"{"kind":"multi_krum","q":2}"#).unwrap();
        assert_eq!(r, AggregationRule::MultiKrum { q: 2, c: None });
        assert!(serde_json::from_str::<AggregationRule>(r#"{"kind":"trmean","b":1,"x":0}"#).is_err());
        assert!(serde_json::from_str::<AggregationRule>(r#"{"kind":"median"}"#).is_err());
    }

    #[test]
    fn from_name_requires_parameters() {
        assert_eq!(
            AggregationRule::from_name("trmean", None, Some(1), None).unwrap(),
            AggregationRule::Trmean { b: 1 }
        );
        assert!(AggregationRule::from_name("krum", None, None, None).is_err());
        assert!(AggregationRule::from_name("bulyan", None, None, None).is_err());
    }

    #[test]
    fn apply_reports_krum_index_and_trim_counts() {
        let b = GradientBatch::from_rows(&[[0.0], [1.0], [2.0], [10.0]]).unwrap();
        let out = AggregationRule::Krum { q: 0 }.apply(&b).unwrap();
        assert_eq!(out.chosen_index, Some(1));
        let out = AggregationRule::Trmean { b: 1 }.apply(&b).unwrap();
        assert_eq!(out.vector, vec![1.5]);
        assert_eq!(out.excluded_per_dim, Some(vec![2]));
    }

    #[test]
    fn multi_krum_default_c_validation() {
        // m=20, q=6: round c has 21-c rows and needs q+3=9
        assert!(AggregationRule::MultiKrum { q: 6, c: None }.validate(20).is_ok());
        assert!(AggregationRule::MultiKrum { q: 6, c: Some(14) }.validate(20).is_err());
        assert!(AggregationRule::MultiKrum { q: 6, c: Some(12) }.validate(20).is_ok());
        assert!(AggregationRule::MultiKrum { q: 6, c: Some(13) }.validate(20).is_err());
        let b = GradientBatch::from_flat((0..20).map(f64::from).collect(), 20, 1).unwrap();
        assert!(AggregationRule::MultiKrum { q: 6, c: None }.apply(&b).is_ok());
    }
}
