mod common;

use byzsgd::attacks::{AttackKind, AttackSpec, CorruptionMask, Placement, RowSelection};
use byzsgd::GradientBatch;
use common::finite_batch;
use proptest::prelude::*;
use proptest::sample::Index;

fn kinds() -> impl Strategy<Value = AttackKind> {
    prop_oneof![
        Just(AttackKind::Gaussian),
        Just(AttackKind::Omniscient),
        Just(AttackKind::BitFlip),
        Just(AttackKind::ExtremeValue),
    ]
}

fn check_mask(before: &GradientBatch, after: &GradientBatch, mask: &CorruptionMask) -> Result<(), TestCaseError> {
    for i in 0..before.m() {
        for j in 0..before.d() {
            let (a, b) = (before.get(i, j), after.get(i, j));
            if !mask.is_marked(i, j) {
                prop_assert_eq!(a.to_bits(), b.to_bits(), "unmarked cell ({}, {}) changed", i, j);
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn masks_follow_placement(
        batch in finite_batch(20, 12),
        kind in kinds(),
        dimensional in any::<bool>(),
        random_rows in any::<bool>(),
        q in any::<Index>(),
        seed in any::<u64>(),
    ) {
        let m = batch.m();
        let q = q.index(m);
        let spec = AttackSpec {
            placement: Some(if dimensional { Placement::DimensionalCells } else { Placement::ClassicRows }),
            row_selection: if random_rows { RowSelection::Random } else { RowSelection::First },
            seed,
            ..AttackSpec::with_kind(kind, q)
        };
        let (after, mask) = spec.apply_seeded(&batch, 0).unwrap();
        check_mask(&batch, &after, &mask)?;
        let counts = mask.column_counts();
        if dimensional {
            prop_assert!(counts.iter().all(|&c| c <= q));
        } else {
            prop_assert!(mask.is_row_union());
            prop_assert_eq!(mask.touched_rows().len(), q);
        }
        let again = spec.apply_seeded(&batch, 0).unwrap();
        prop_assert_eq!(
            after.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            again.0.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(&mask, &again.1);
    }

    #[test]
    fn gambler_stays_on_its_shard(batch in finite_batch(10, 60), shard in 0usize..20, seed in any::<u64>()) {
        let spec = AttackSpec {
            flip_prob: 0.3,
            target_shard: shard,
            seed,
            ..AttackSpec::with_kind(AttackKind::Gambler, 0)
        };
        let (after, mask) = spec.apply_seeded(&batch, 1).unwrap();
        check_mask(&batch, &after, &mask)?;
        let range = byzsgd::attacks::shard_range(batch.d(), 20, shard);
        for (j, &c) in mask.column_counts().iter().enumerate() {
            prop_assert!(c == 0 || range.contains(&j));
        }
    }
}

#[test]
fn gaussian_cells_have_the_requested_moments() {
    let batch = GradientBatch::from_flat(vec![0.0; 20 * 50], 20, 50).unwrap();
    let spec = AttackSpec {
        sigma: 200.0,
        row_selection: RowSelection::Random,
        ..AttackSpec::with_kind(AttackKind::Gaussian, 6)
    };
    let mut values = Vec::new();
    for round in 0..200 {
        let (after, mask) = spec.apply_seeded(&batch, round).unwrap();
        assert_eq!(mask.touched_rows().len(), 6);
        for i in mask.touched_rows() {
            values.extend_from_slice(after.row(i));
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    // std errors of the sample mean and variance of a normal
    let se_mean = 200.0 / n.sqrt();
    let se_var = 200.0f64.powi(2) * (2.0 / (n - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * se_mean, "mean {mean}");
    assert!((var - 40_000.0).abs() <= 3.0 * se_var, "var {var}");
}

#[test]
fn bitflip_marks_one_cell_per_column_of_the_leading_block() {
    let batch = GradientBatch::from_flat((0..20 * 1200).map(|x| 1.0 + (x % 1000) as f64 * 1e-3).collect(), 20, 1200).unwrap();
    let (after, mask) = AttackSpec::with_kind(AttackKind::BitFlip, 1).apply_seeded(&batch, 0).unwrap();
    assert_eq!(mask.count(), 1000);
    // values in [1, 2) gain two exponent bits; one Byzantine value per
    // column spreads over many rows
    assert!(mask.touched_rows().len() > 10);
    for j in 0..1000 {
        let i = (0..20).find(|&i| mask.is_marked(i, j)).unwrap();
        assert!(after.get(i, j).abs() > 1e15);
    }
}
