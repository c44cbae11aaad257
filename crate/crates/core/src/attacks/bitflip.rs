//! Bit-level corruption of single-precision float images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where bit position 1 sits in a 32-bit word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BitOrder {
    /// Position 1 is the least-significant bit; 32 is the sign bit.
    #[default]
    LsbOneBased,
    /// Position 1 is the sign bit; 32 is the least-significant bit.
    MsbOneBased,
}

/// XOR mask for a set of 1-based bit positions.
pub fn bit_mask(positions: &[u32], order: BitOrder) -> Result<u32> {
    positions.iter().try_fold(0u32, |mask, &p| {
        if !(1..=32).contains(&p) {
            return Err(Error::invalid(format!("bit position {p} outside 1..=32")));
        }
        let shift = match order {
            BitOrder::LsbOneBased => p - 1,
            BitOrder::MsbOneBased => 32 - p,
        };
        Ok(mask | (1u32 << shift))
    })
}

/// Rounds `value` to the nearest `f32`, XORs its bit pattern with `mask`
/// and widens the result back.
#[inline]
pub fn flip_f32_bits(value: f64, mask: u32) -> f64 {
    f64::from(f32::from_bits((value as f32).to_bits() ^ mask))
}
