//! Seeded Byzantine corruption of a gradient batch.
//!
//! Classic placement corrupts whole worker rows; dimensional placement
//! corrupts up to `q` cells per coordinate, chosen independently per
//! column. Every attack returns the corrupted batch together with a mask
//! of the cells it was allowed to touch.

mod bitflip;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::batch::GradientBatch;
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

pub use bitflip::{bit_mask, flip_f32_bits, BitOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    Gaussian,
    Omniscient,
    BitFlip,
    Gambler,
    /// Byzantine cells set to a fixed large value (`magnitude`).
    ExtremeValue,
    /// Cell `(i, i mod d)` multiplied by `-magnitude`.
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    ClassicRows,
    DimensionalCells,
}

/// Which rows are Byzantine under classic placement.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSelection {
    /// Workers `0..q`.
    #[default]
    First,
    /// A seeded uniform `q`-subset.
    Random,
    /// An explicit list of `q` worker indices.
    Rows(Vec<usize>),
}

/// Attack description, deserializable from an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Defaults per kind: dimensional for bit-flip and diagonal, classic
    /// otherwise. Ignored by the gambler attack.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
    /// Byzantine rows (classic) or Byzantine cells per column (dimensional).
    pub q: usize,
    pub row_selection: RowSelection,
    pub sigma: f64,
    pub scale: f64,
    pub magnitude: f64,
    pub bit_positions: Vec<u32>,
    pub bit_order: BitOrder,
    pub affected_dims: usize,
    pub flip_prob: f64,
    pub gambler_factor: f64,
    pub shard_count: usize,
    pub target_shard: usize,
    pub seed: u64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            placement: None,
            q: 0,
            row_selection: RowSelection::First,
            sigma: 200.0,
            scale: 1e20,
            magnitude: 1e6,
            bit_positions: vec![22, 30, 31, 32],
            bit_order: BitOrder::LsbOneBased,
            affected_dims: 1000,
            flip_prob: 0.0005,
            gambler_factor: -1e20,
            shard_count: 20,
            target_shard: 0,
            seed: 0,
        }
    }
}

/// Cells replaced by an attack, row-major m×d.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionMask {
    m: usize,
    d: usize,
    cells: Vec<bool>,
}

impl CorruptionMask {
    pub fn empty(m: usize, d: usize) -> Self {
        Self {
            m,
            d,
            cells: vec![false; m * d],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mark(&mut self, i: usize, j: usize) {
        self.cells[i * self.d + j] = true;
    }

    pub fn is_marked(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.d + j]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    /// Number of marked cells in each column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.d];
        for row in self.cells.chunks_exact(self.d) {
            for (c, &hit) in counts.iter_mut().zip(row) {
                *c += usize::from(hit);
            }
        }
        counts
    }

    /// Rows with at least one marked cell.
    pub fn touched_rows(&self) -> Vec<usize> {
        (0..self.m)
            .filter(|&i| self.cells[i * self.d..(i + 1) * self.d].iter().any(|&c| c))
            .collect()
    }

    /// True when every touched row is marked in full.
    pub fn is_row_union(&self) -> bool {
        self.cells
            .chunks_exact(self.d)
            .all(|row| row.iter().all(|&c| c) || row.iter().all(|&c| !c))
    }
}

impl AttackSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_kind(kind: AttackKind, q: usize) -> Self {
        Self {
            kind,
            q,
            ..Self::default()
        }
    }

    pub fn placement(&self) -> Placement {
        self.placement.unwrap_or(match self.kind {
            AttackKind::BitFlip | AttackKind::Diagonal => Placement::DimensionalCells,
            _ => Placement::ClassicRows,
        })
    }

    /// Checks the parameters against a batch of `m` rows.
    pub fn validate(&self, m: usize) -> Result<()> {
        let uses_q = matches!(
            self.kind,
            AttackKind::Gaussian | AttackKind::Omniscient | AttackKind::BitFlip | AttackKind::ExtremeValue
        );
        if uses_q && self.q >= m {
            return Err(Error::constraint(format!(
                "attack needs q < m, got q={}, m={m}",
                self.q
            )));
        }
        if let RowSelection::Rows(rows) = &self.row_selection {
            if uses_q && self.placement() == Placement::ClassicRows {
                if rows.len() != self.q {
                    return Err(Error::invalid(format!(
                        "{} explicit Byzantine rows listed for q={}",
                        rows.len(),
                        self.q
                    )));
                }
                let mut sorted = rows.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != rows.len() || sorted.last().is_some_and(|&r| r >= m) {
                    return Err(Error::invalid("explicit Byzantine rows must be distinct and < m"));
                }
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::invalid(format!("flip_prob {} outside [0,1]", self.flip_prob)));
        }
        bit_mask(&self.bit_positions, self.bit_order)?;
        if self.kind == AttackKind::Gambler {
            if self.shard_count == 0 {
                return Err(Error::invalid("shard_count must be >= 1"));
            }
            if self.target_shard >= self.shard_count {
                return Err(Error::invalid(format!(
                    "target_shard {} out of range 0..{}",
                    self.target_shard, self.shard_count
                )));
            }
        }
        Ok(())
    }

    /// Applies the attack using the caller's random stream.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        batch: &GradientBatch,
        rng: &mut R,
    ) -> Result<(GradientBatch, CorruptionMask)> {
        self.validate(batch.m())?;
        match self.kind {
            AttackKind::None => Ok((batch.clone(), CorruptionMask::empty(batch.m(), batch.d()))),
            AttackKind::Gaussian => apply_gaussian(batch, self, rng),
            AttackKind::Omniscient => apply_omniscient(batch, self, rng),
            AttackKind::BitFlip => apply_bitflip(batch, self, rng),
            AttackKind::Gambler => apply_gambler(batch, self, rng),
            AttackKind::ExtremeValue => apply_extreme_value(batch, self, rng),
            AttackKind::Diagonal => Ok(dimensional_diagonal(batch, self.magnitude)),
        }
    }

    /// Applies the attack with the stream keyed by `(seed, round)`.
    pub fn apply_seeded(&self, batch: &GradientBatch, round: u64) -> Result<(GradientBatch, CorruptionMask)> {
        let mut rng = substream(self.seed, Purpose::Attack, &[round]);
        self.apply(batch, &mut rng)
    }

    fn byzantine_rows<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<usize> {
        let mut rows = match &self.row_selection {
            RowSelection::First => (0..self.q).collect(),
            RowSelection::Random => sample(rng, m, self.q).into_vec(),
            RowSelection::Rows(rows) => rows.clone(),
        };
        rows.sort_unstable();
        rows
    }

    /// Marks the assignable cells for a q-bounded attack and returns them
    /// column by column.
    fn target_cells<R: Rng + ?Sized>(&self, m: usize, cols: usize, rng: &mut R) -> Vec<Vec<usize>> {
        match self.placement() {
            Placement::ClassicRows => {
                let rows = self.byzantine_rows(m, rng);
                vec![rows; cols]
            }
            Placement::DimensionalCells => (0..cols)
                .map(|_| {
                    let mut rows = sample(rng, m, self.q).into_vec();
                    rows.sort_unstable();
                    rows
                })
                .collect(),
        }
    }
}

fn check_kind(spec: &AttackSpec, kind: AttackKind, m: usize) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::invalid(format!(
            "attack spec of kind {:?} passed to the {kind:?} attack",
            spec.kind
        )));
    }
    spec.validate(m)
}

/// Replaces the Byzantine cells with i.i.d. `Normal(0, sigma^2)` samples.
pub fn apply_gaussian<R: Rng + ?Sized>(
    batch: &GradientBatch,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<(GradientBatch, CorruptionMask)> {
    check_kind(spec, AttackKind::Gaussian, batch.m())?;
    let normal = Normal::new(0.0, spec.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let targets = spec.target_cells(batch.m(), batch.d(), rng);
    let mut out = batch.clone();
    let mut mask = CorruptionMask::empty(batch.m(), batch.d());
    match spec.placement() {
        Placement::ClassicRows => {
            // row-wise draws so a Byzantine row is one contiguous sample
            for &i in targets.first().map(Vec::as_slice).unwrap_or(&[]) {
                for j in 0..batch.d() {
                    out.set(i, j, normal.sample(rng));
                    mask.mark(i, j);
                }
            }
        }
        Placement::DimensionalCells => {
            for (j, rows) in targets.iter().enumerate() {
                for &i in rows {
                    out.set(i, j, normal.sample(rng));
                    mask.mark(i, j);
                }
            }
        }
    }
    Ok((out, mask))
}

/// Sets every Byzantine cell to `-scale` times the sum of the correct
/// values in its column.
pub fn apply_omniscient<R: Rng + ?Sized>(
    batch: &GradientBatch,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<(GradientBatch, CorruptionMask)> {
    check_kind(spec, AttackKind::Omniscient, batch.m())?;
    let targets = spec.target_cells(batch.m(), batch.d(), rng);
    let mut out = batch.clone();
    let mut mask = CorruptionMask::empty(batch.m(), batch.d());
    for (j, rows) in targets.iter().enumerate() {
        let mut correct_sum = 0.0;
        let mut next = rows.iter().peekable();
        for i in 0..batch.m() {
            if next.peek() == Some(&&i) {
                next.next();
            } else {
                correct_sum += batch.get(i, j);
            }
        }
        for &i in rows {
            out.set(i, j, -correct_sum * spec.scale);
            mask.mark(i, j);
        }
    }
    Ok((out, mask))
}

/// Flips `bit_positions` in the binary32 image of `q` cells per column
/// over the first `affected_dims` coordinates.
pub fn apply_bitflip<R: Rng + ?Sized>(
    batch: &GradientBatch,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<(GradientBatch, CorruptionMask)> {
    check_kind(spec, AttackKind::BitFlip, batch.m())?;
    let flip_mask = bit_mask(&spec.bit_positions, spec.bit_order)?;
    let cols = spec.affected_dims.min(batch.d());
    let targets = spec.target_cells(batch.m(), cols, rng);
    let mut out = batch.clone();
    let mut mask = CorruptionMask::empty(batch.m(), batch.d());
    for (j, rows) in targets.iter().enumerate() {
        for &i in rows {
            out.set(i, j, flip_f32_bits(batch.get(i, j), flip_mask));
            mask.mark(i, j);
        }
    }
    Ok((out, mask))
}

/// Contiguous coordinate range owned by `shard` when `d` parameters are
/// split evenly over `shards` servers, remainder on the last one.
pub fn shard_range(d: usize, shards: usize, shard: usize) -> std::ops::Range<usize> {
    let width = d / shards;
    let start = shard * width;
    let end = if shard + 1 == shards { d } else { start + width };
    start..end
}

/// Multiplies each value on the target shard by `gambler_factor` with
/// probability `flip_prob`, independently per cell.
pub fn apply_gambler<R: Rng + ?Sized>(
    batch: &GradientBatch,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<(GradientBatch, CorruptionMask)> {
    check_kind(spec, AttackKind::Gambler, batch.m())?;
    let range = shard_range(batch.d(), spec.shard_count, spec.target_shard);
    let mut out = batch.clone();
    let mut mask = CorruptionMask::empty(batch.m(), batch.d());
    if spec.flip_prob == 0.0 {
        return Ok((out, mask));
    }
    for i in 0..batch.m() {
        for j in range.clone() {
            if rng.random::<f64>() < spec.flip_prob {
                out.set(i, j, batch.get(i, j) * spec.gambler_factor);
                mask.mark(i, j);
            }
        }
    }
    Ok((out, mask))
}

/// Sets every Byzantine cell to `magnitude`.
pub fn apply_extreme_value<R: Rng + ?Sized>(
    batch: &GradientBatch,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<(GradientBatch, CorruptionMask)> {
    check_kind(spec, AttackKind::ExtremeValue, batch.m())?;
    let targets = spec.target_cells(batch.m(), batch.d(), rng);
    let mut out = batch.clone();
    let mut mask = CorruptionMask::empty(batch.m(), batch.d());
    for (j, rows) in targets.iter().enumerate() {
        for &i in rows {
            out.set(i, j, spec.magnitude);
            mask.mark(i, j);
        }
    }
    Ok((out, mask))
}

/// Multiplies cell `(i, i mod d)` of every row by `-magnitude`: one
/// corrupted value per coordinate when `d >= m`, every row touched.
pub fn dimensional_diagonal(batch: &GradientBatch, magnitude: f64) -> (GradientBatch, CorruptionMask) {
    let mut out = batch.clone();
    let mut mask = CorruptionMask::empty(batch.m(), batch.d());
    for i in 0..batch.m() {
        let j = i % batch.d();
        out.set(i, j, batch.get(i, j) * -magnitude);
        mask.mark(i, j);
    }
    (out, mask)
}
