//! The m×d matrix of gradient messages received by the server in one round.

use crate::error::{Error, Result};

/// Per-worker gradient messages, one row per worker, stored row-major.
///
/// Rows may contain non-finite values once an attack has touched them.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBatch {
    data: Vec<f64>,
    m: usize,
    d: usize,
}

impl GradientBatch {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::invalid("gradient batch has no rows"));
        }
        let d = rows[0].as_ref().len();
        if d == 0 {
            return Err(Error::invalid("gradient rows have dimension 0"));
        }
        let mut data = Vec::with_capacity(m * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, m, d })
    }

    pub fn from_flat(data: Vec<f64>, m: usize, d: usize) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::invalid(format!("empty batch shape {m}x{d}")));
        }
        if data.len() != m * d {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                actual: data.len(),
            });
        }
        Ok(Self { data, m, d })
    }

    /// Number of workers.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Parameter dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.d + j] = v;
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Copies column `j` into `out` (cleared first).
    pub fn column_into(&self, j: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.m).map(|i| self.data[i * self.d + j]));
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.m);
        self.column_into(j, &mut out);
        out
    }

    /// Returns a batch whose row `i` is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                actual: perm.len(),
            });
        }
        let mut seen = vec![false; self.m];
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            if p >= self.m || std::mem::replace(&mut seen[p], true) {
                return Err(Error::invalid("row permutation is not a bijection"));
            }
            data.extend_from_slice(self.row(p));
        }
        Ok(Self {
            data,
            m: self.m,
            d: self.d,
        })
    }

    /// Adds `z` to every row.
    pub fn translate(&self, z: &[f64]) -> Result<Self> {
        if z.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: z.len(),
            });
        }
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.d) {
            for (v, s) in row.iter_mut().zip(z) {
                *v += s;
            }
        }
        Ok(out)
    }

    /// Keeps only the rows whose index is listed, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::invalid("row selection is empty"));
        }
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            if i >= self.m {
                return Err(Error::invalid(format!("row {i} out of range 0..{}", self.m)));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            data,
            m: idx.len(),
            d: self.d,
        })
    }
}
