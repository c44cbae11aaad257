//! Coordinate-wise trimmed mean and Phocas.
//!
//! Both rules work one coordinate at a time. Kept values are always summed
//! in ascending worker-index order, whatever order the selection step left
//! its scratch buffer in, so the result does not depend on the selection
//! algorithm's internal permutation.

use std::cmp::Ordering;

use super::select::{nan_last_cmp, select_pair};
use crate::batch::GradientBatch;
use crate::error::{Error, Result};

const COLUMN_BLOCK: usize = 64;

/// Largest legal trim count for `m` workers: `ceil(m/2) - 1`.
pub fn max_trim(m: usize) -> usize {
    m.div_ceil(2).saturating_sub(1)
}

pub(crate) fn check_trim(m: usize, b: usize) -> Result<()> {
    if b > max_trim(m) {
        return Err(Error::constraint(format!(
            "trim count b={b} exceeds ceil(m/2)-1={} for m={m}",
            max_trim(m)
        )));
    }
    Ok(())
}

/// Applies `f` to every column of `batch`, gathering columns through a
/// small column-major block so that rows are read contiguously.
pub(crate) fn map_columns<F>(batch: &GradientBatch, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let (m, d) = (batch.m(), batch.d());
    let mut out = Vec::with_capacity(d);
    let mut block = vec![0.0; m * COLUMN_BLOCK];
    for j0 in (0..d).step_by(COLUMN_BLOCK) {
        let w = COLUMN_BLOCK.min(d - j0);
        for i in 0..m {
            for (c, &v) in batch.row(i)[j0..j0 + w].iter().enumerate() {
                block[c * m + i] = v;
            }
        }
        out.extend((0..w).map(|c| f(&block[c * m..(c + 1) * m])));
    }
    out
}

/// Scratch space reused across coordinates.
#[derive(Default)]
pub(crate) struct Scratch {
    values: Vec<f64>,
    keyed: Vec<(f64, usize)>,
}

/// `b`-trimmed mean of one coordinate: the average of order statistics
/// `b+1 ..= m-b`. Values tied with a threshold are admitted in ascending
/// index order until exactly `m - 2b` values are kept.
pub(crate) fn trimmed_mean_scalar(col: &[f64], b: usize, scratch: &mut Scratch) -> f64 {
    let m = col.len();
    let keep = m - 2 * b;
    if b == 0 {
        return col.iter().fold(0.0, |acc, &v| acc + v) / m as f64;
    }
    scratch.values.clear();
    scratch.values.extend_from_slice(col);
    let (lo, hi) = select_pair(&mut scratch.values, b, m - b - 1);

    let mut below_lo = 0usize;
    let mut below_hi = 0usize;
    for &v in col {
        if nan_last_cmp(v, lo) == Ordering::Less {
            below_lo += 1;
        }
        if nan_last_cmp(v, hi) == Ordering::Less {
            below_hi += 1;
        }
    }

    let (mut seen_lo, mut seen_hi, mut kept) = (0usize, 0usize, 0usize);
    let mut sum = 0.0;
    for &v in col {
        let vs_lo = nan_last_cmp(v, lo);
        if vs_lo == Ordering::Less {
            continue;
        }
        let vs_hi = nan_last_cmp(v, hi);
        if vs_hi == Ordering::Greater {
            continue;
        }
        if vs_lo == Ordering::Equal {
            seen_lo += 1;
            let rank = below_lo + seen_lo;
            if rank <= b || rank > m - b {
                continue;
            }
        } else if vs_hi == Ordering::Equal {
            seen_hi += 1;
            if below_hi + seen_hi > m - b {
                continue;
            }
        }
        sum += v;
        kept += 1;
    }
    debug_assert_eq!(kept, keep);
    sum / keep as f64
}

/// Phocas on one coordinate: the average of the `m - b` values nearest to
/// the `b`-trimmed mean, distance ties broken by lower index.
pub(crate) fn phocas_scalar(col: &[f64], b: usize, scratch: &mut Scratch) -> f64 {
    let m = col.len();
    if b == 0 {
        return col.iter().fold(0.0, |acc, &v| acc + v) / m as f64;
    }
    let center = trimmed_mean_scalar(col, b, scratch);
    let key_cmp = |x: &(f64, usize), y: &(f64, usize)| nan_last_cmp(x.0, y.0).then(x.1.cmp(&y.1));

    scratch.keyed.clear();
    scratch
        .keyed
        .extend(col.iter().enumerate().map(|(i, &v)| ((v - center).abs(), i)));
    let cutoff = *scratch.keyed.select_nth_unstable_by(m - b - 1, key_cmp).1;

    let mut sum = 0.0;
    for (i, &v) in col.iter().enumerate() {
        if key_cmp(&((v - center).abs(), i), &cutoff) != Ordering::Greater {
            sum += v;
        }
    }
    sum / (m - b) as f64
}

/// Coordinate-wise `b`-trimmed mean of the batch.
pub fn trimmed_mean(batch: &GradientBatch, b: usize) -> Result<Vec<f64>> {
    check_trim(batch.m(), b)?;
    let mut scratch = Scratch::default();
    Ok(map_columns(batch, |col| trimmed_mean_scalar(col, b, &mut scratch)))
}

/// Coordinate-wise Phocas with trim count `b`.
pub fn phocas(batch: &GradientBatch, b: usize) -> Result<Vec<f64>> {
    check_trim(batch.m(), b)?;
    let mut scratch = Scratch::default();
    Ok(map_columns(batch, |col| phocas_scalar(col, b, &mut scratch)))
}
