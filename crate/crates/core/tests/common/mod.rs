#![allow(dead_code)]

use byzsgd::GradientBatch;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Random batch in one of several styles: continuous, heavy duplicates,
/// constant columns, or with non-finite injections.
pub fn random_batch<R: Rng>(rng: &mut R, m: usize, d: usize) -> GradientBatch {
    let style = rng.random_range(0..4);
    let mut data: Vec<f64> = (0..m * d)
        .map(|_| match style {
            1 => f64::from(rng.random_range(-3i32..=3)),
            _ => rng.sample::<f64, _>(StandardNormal) * 10.0,
        })
        .collect();
    if style == 2 {
        for j in 0..d {
            let v = data[j];
            for i in 0..m {
                data[i * d + j] = v;
            }
        }
    }
    if style == 3 {
        for v in data.iter_mut() {
            if rng.random_bool(0.1) {
                *v = [f64::NAN, f64::INFINITY, f64::NEG_INFINITY, -0.0][rng.random_range(0..4)];
            }
        }
    }
    GradientBatch::from_flat(data, m, d).unwrap()
}

/// Bitwise equality that treats every NaN as equal.
pub fn same(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y || (x.is_nan() && y.is_nan()))
}

pub fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            (x.is_nan() && y.is_nan()) || x == y || (x - y).abs() <= rel * x.abs().max(y.abs()).max(1.0)
        })
}

/// Finite batches with some duplicated values.
pub fn finite_batch(max_m: usize, max_d: usize) -> impl Strategy<Value = GradientBatch> {
    (3..=max_m, 1..=max_d).prop_flat_map(|(m, d)| {
        prop::collection::vec(
            prop_oneof![(-5i32..5).prop_map(f64::from), -1.0e3..1.0e3f64],
            m * d,
        )
        .prop_map(move |data| GradientBatch::from_flat(data, m, d).unwrap())
    })
}

/// Batches of Gaussian values built from a seed. Shrinking moves the
/// seed rather than the values, so exact ties keep probability zero.
pub fn continuous_batch(max_m: usize, max_d: usize) -> impl Strategy<Value = GradientBatch> {
    (3..=max_m, 1..=max_d, any::<u64>()).prop_map(|(m, d, seed)| {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..m * d).map(|_| rng.sample::<f64, _>(StandardNormal) * 100.0).collect();
        GradientBatch::from_flat(data, m, d).unwrap()
    })
}
