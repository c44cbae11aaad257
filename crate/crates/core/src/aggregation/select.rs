//! Order statistics over possibly non-finite scalars.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Total order on `f64` used by every rank-based rule: the usual numeric
/// order, with all NaNs equal to each other and greater than `+inf`.
///
/// `-0.0` and `0.0` compare equal, as they do numerically.
#[inline]
pub fn nan_last_cmp(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (false, false) => a.partial_cmp(&b).unwrap_or(Ordering::Equal),
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (true, true) => Ordering::Equal,
    }
}

/// Returns the `k`-th smallest element (1-based, counting multiplicity)
/// under [`nan_last_cmp`]. Expected linear time; the input is not modified.
pub fn select_kth(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > values.len() {
        return Err(Error::invalid(format!(
            "rank {k} out of range 1..={}",
            values.len()
        )));
    }
    let mut scratch = values.to_vec();
    Ok(select_in_place(&mut scratch, k - 1))
}

/// Partially reorders `buf` so that position `idx` (0-based) holds the
/// element of that rank, and returns it.
#[inline]
pub(crate) fn select_in_place(buf: &mut [f64], idx: usize) -> f64 {
    *buf.select_nth_unstable_by(idx, |a, b| nan_last_cmp(*a, *b)).1
}

/// Returns the order statistics of ranks `lo_rank` and `hi_rank`
/// (0-based, `lo_rank <= hi_rank`), reordering `buf`.
pub(crate) fn select_pair(buf: &mut [f64], lo_rank: usize, hi_rank: usize) -> (f64, f64) {
    debug_assert!(lo_rank <= hi_rank && hi_rank < buf.len());
    let hi = select_in_place(buf, hi_rank);
    if lo_rank == hi_rank {
        return (hi, hi);
    }
    // Everything left of `hi_rank` is <= hi, so rank `lo_rank` lives there.
    let lo = select_in_place(&mut buf[..hi_rank], lo_rank);
    (lo, hi)
}
