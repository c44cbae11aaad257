//! Krum and Multi-Krum.

use std::cmp::Ordering;

use super::select::nan_last_cmp;
use crate::batch::GradientBatch;
use crate::error::{Error, Result};

/// How Multi-Krum behaves once the remaining set is too small to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShrinkPolicy {
    /// Every round must satisfy `remaining - q - 2 >= 1`.
    #[default]
    Strict,
    /// Rounds without enough neighbours score every candidate as 0, so the
    /// lowest remaining index is taken (plain selection with removal).
    Exhaust,
}

/// Pairwise squared Euclidean distances, row-major `m * m`.
/// NaN distances are mapped to `+inf`.
pub(crate) fn squared_distances(batch: &GradientBatch) -> Vec<f64> {
    let m = batch.m();
    let mut dist = vec![0.0; m * m];
    for i in 0..m {
        let ri = batch.row(i);
        for j in (i + 1)..m {
            let rj = batch.row(j);
            let mut s = 0.0;
            for (a, b) in ri.iter().zip(rj) {
                let diff = a - b;
                s += diff * diff;
            }
            if s.is_nan() {
                s = f64::INFINITY;
            }
            dist[i * m + j] = s;
            dist[j * m + i] = s;
        }
    }
    dist
}

/// Krum scores for the candidates in `active` (ascending worker indices):
/// each is the sum of squared distances to its `neighbours` nearest other
/// active rows, summed in ascending neighbour index.
pub(crate) fn scores(dist: &[f64], m: usize, active: &[usize], neighbours: usize) -> Vec<f64> {
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(active.len());
    active
        .iter()
        .map(|&i| {
            if neighbours == 0 {
                return 0.0;
            }
            keyed.clear();
            keyed.extend(active.iter().filter(|&&j| j != i).map(|&j| (dist[i * m + j], j)));
            let key_cmp =
                |x: &(f64, usize), y: &(f64, usize)| nan_last_cmp(x.0, y.0).then(x.1.cmp(&y.1));
            let cutoff = *keyed.select_nth_unstable_by(neighbours - 1, key_cmp).1;
            active
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (dist[i * m + j], j))
                .filter(|k| key_cmp(k, &cutoff) != Ordering::Greater)
                .fold(0.0, |acc, (s, _)| acc + s)
        })
        .collect()
}

/// Position of the minimal score; the first one wins ties.
pub(crate) fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (pos, &s) in scores.iter().enumerate().skip(1) {
        if nan_last_cmp(s, scores[best]) == Ordering::Less {
            best = pos;
        }
    }
    best
}

pub(crate) fn check_krum(m: usize, q: usize) -> Result<()> {
    if 2 * q + 2 >= m {
        return Err(Error::constraint(format!(
            "Krum requires 2q+2 < m, got q={q}, m={m}"
        )));
    }
    Ok(())
}

/// Krum: the row with the minimal sum of squared distances to its
/// `m - q - 2` nearest neighbours. Returns the row and its index.
pub fn krum(batch: &GradientBatch, q: usize) -> Result<(Vec<f64>, usize)> {
    let m = batch.m();
    check_krum(m, q)?;
    let dist = squared_distances(batch);
    let active: Vec<usize> = (0..m).collect();
    let s = scores(&dist, m, &active, m - q - 2);
    let k = argmin(&s);
    Ok((batch.row(k).to_vec(), k))
}

/// Multi-Krum with `c` rounds of Krum on the shrinking set (same `q` each
/// round). Returns the average of the selected rows, summed in ascending
/// worker index, and the selected indices in selection order.
pub fn multi_krum_with(
    batch: &GradientBatch,
    q: usize,
    c: usize,
    policy: ShrinkPolicy,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let m = batch.m();
    check_krum(m, q)?;
    if c == 0 || c > m {
        return Err(Error::constraint(format!(
            "Multi-Krum requires 1 <= c <= m, got c={c}, m={m}"
        )));
    }
    let dist = squared_distances(batch);
    let mut active: Vec<usize> = (0..m).collect();
    let mut chosen = Vec::with_capacity(c);
    for round in 0..c {
        let remaining = active.len();
        let neighbours = match (remaining.checked_sub(q + 2), policy) {
            (Some(n), _) if n >= 1 => n,
            (n, ShrinkPolicy::Exhaust) => n.unwrap_or(0),
            (_, ShrinkPolicy::Strict) => {
                return Err(Error::constraint(format!(
                    "Multi-Krum round {} of {c}: {remaining} rows left, need remaining-q-2 >= 1 with q={q}",
                    round + 1
                )))
            }
        };
        let s = scores(&dist, m, &active, neighbours);
        let pos = argmin(&s);
        chosen.push(active.remove(pos));
    }
    let mut ordered = chosen.clone();
    ordered.sort_unstable();
    let mut out = vec![0.0; batch.d()];
    for &i in &ordered {
        for (o, v) in out.iter_mut().zip(batch.row(i)) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= c as f64;
    }
    Ok((out, chosen))
}

/// Multi-Krum under the strict shrink rule.
pub fn multi_krum(batch: &GradientBatch, q: usize, c: usize) -> Result<Vec<f64>> {
    multi_krum_with(batch, q, c, ShrinkPolicy::Strict).map(|(v, _)| v)
}
