//! Slow reference implementations: full sorts and exhaustive scoring.
//!
//! Nothing here shares code with the fast paths in [`crate::aggregation`]
//! beyond the batch type. Kept values are summed in ascending worker
//! index, so a correct fast path matches bit for bit.

use std::cmp::Ordering;

use crate::aggregation::AggregationOutput;
use crate::batch::GradientBatch;
use crate::error::{Error, Result};
use crate::training::{Model, Samples};

/// Total order with every NaN above `+inf` and `-0 == +0`.
fn order(a: f64, b: f64) -> Ordering {
    let canon = |v: f64| {
        if v.is_nan() {
            f64::NAN
        } else if v == 0.0 {
            0.0
        } else {
            v
        }
    };
    canon(a).total_cmp(&canon(b))
}

fn check_b(m: usize, b: usize) -> Result<()> {
    if 2 * b >= m {
        return Err(Error::Constraint(format!("trim count b={b} too large for m={m}")));
    }
    Ok(())
}

fn column(batch: &GradientBatch, j: usize) -> Vec<f64> {
    (0..batch.m()).map(|i| batch.get(i, j)).collect()
}

fn sum_in_index_order(col: &[f64], mut kept: Vec<usize>) -> f64 {
    kept.sort();
    let mut s = 0.0;
    for i in kept {
        s += col[i];
    }
    s
}

fn trimmed_column(col: &[f64], b: usize) -> f64 {
    let m = col.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&x, &y| order(col[x], col[y]));
    let kept = idx[b..m - b].to_vec();
    sum_in_index_order(col, kept) / (m - 2 * b) as f64
}

/// Trimmed mean by a full stable sort of each column.
pub fn sort_trimmed_mean(batch: &GradientBatch, b: usize) -> Result<Vec<f64>> {
    check_b(batch.m(), b)?;
    Ok((0..batch.d()).map(|j| trimmed_column(&column(batch, j), b)).collect())
}

/// Phocas by sorting `(distance, index)` pairs of each column.
pub fn brute_phocas(batch: &GradientBatch, b: usize) -> Result<Vec<f64>> {
    let m = batch.m();
    check_b(m, b)?;
    Ok((0..batch.d())
        .map(|j| {
            let col = column(batch, j);
            let t = trimmed_column(&col, b);
            let mut pairs: Vec<(f64, usize)> = col.iter().enumerate().map(|(i, v)| ((v - t).abs(), i)).collect();
            pairs.sort_by(|x, y| order(x.0, y.0).then(x.1.cmp(&y.1)));
            let kept = pairs[..m - b].iter().map(|p| p.1).collect();
            sum_in_index_order(&col, kept) / (m - b) as f64
        })
        .collect())
}

/// Krum by scoring every row against its fully sorted neighbour list.
pub fn brute_krum(batch: &GradientBatch, q: usize) -> Result<AggregationOutput> {
    let m = batch.m();
    if 2 * q + 2 >= m {
        return Err(Error::Constraint(format!("Krum needs 2q+2 < m, got q={q}, m={m}")));
    }
    let dist = |i: usize, j: usize| {
        let mut s = 0.0;
        for (a, c) in batch.row(i).iter().zip(batch.row(j)) {
            s += (a - c) * (a - c);
        }
        if s.is_nan() {
            f64::INFINITY
        } else {
            s
        }
    };
    let full: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| dist(i.min(j), i.max(j))).collect()).collect();
    let scores: Vec<f64> = (0..m)
        .map(|i| {
            let mut nb: Vec<(f64, usize)> = (0..m).filter(|&j| j != i).map(|j| (full[i][j], j)).collect();
            nb.sort_by(|x, y| order(x.0, y.0).then(x.1.cmp(&y.1)));
            let mut chosen: Vec<usize> = nb[..m - q - 2].iter().map(|p| p.1).collect();
            chosen.sort();
            let mut s = 0.0;
            for j in chosen {
                s += full[i][j];
            }
            s
        })
        .collect();
    let mut best = 0;
    for i in 1..m {
        if order(scores[i], scores[best]) == Ordering::Less {
            best = i;
        }
    }
    Ok(AggregationOutput {
        vector: batch.row(best).to_vec(),
        chosen_index: Some(best),
        excluded_per_dim: None,
    })
}

/// Central differences `(f(x + h e_j) - f(x - h e_j)) / 2h` for each
/// coordinate in `coords`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], coords: &[usize], step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    let mut probe = x.to_vec();
    coords
        .iter()
        .map(|&j| {
            if j >= x.len() {
                return Err(Error::InvalidInput(format!("coordinate {j} out of range")));
            }
            probe[j] = x[j] + step;
            let up = f(&probe);
            probe[j] = x[j] - step;
            let down = f(&probe);
            probe[j] = x[j];
            Ok((up - down) / (2.0 * step))
        })
        .collect()
}

/// Finite-difference gradient of a model's mean loss over `samples`,
/// restricted to `coords`.
pub fn finite_difference_grad(
    model: &Model,
    x: &[f64],
    samples: &Samples,
    coords: &[usize],
    step: f64,
) -> Result<Vec<f64>> {
    model.loss(x, samples)?;
    central_difference(|p| model.loss(p, samples).unwrap_or(f64::NAN), x, coords, step)
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().fold(0.0, |s, x| s + x * x).sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Fast versus reference output.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub fast: Vec<f64>,
    pub oracle: Vec<f64>,
    pub max_abs_dev: f64,
    pub pass: bool,
}

/// Compares coordinate by coordinate. Two NaNs, or two infinities of the
/// same sign, deviate by 0.
pub fn compare(fast: Vec<f64>, oracle: Vec<f64>, tol: f64) -> OracleReport {
    let mut max_abs_dev: f64 = if fast.len() == oracle.len() { 0.0 } else { f64::INFINITY };
    for (a, b) in fast.iter().zip(&oracle) {
        let dev = if (a.is_nan() && b.is_nan()) || a == b {
            0.0
        } else if a.is_nan() || b.is_nan() {
            f64::INFINITY
        } else {
            (a - b).abs()
        };
        max_abs_dev = max_abs_dev.max(dev);
    }
    OracleReport {
        pass: max_abs_dev <= tol,
        fast,
        oracle,
        max_abs_dev,
    }
}
