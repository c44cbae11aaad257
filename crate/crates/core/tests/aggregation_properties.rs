mod common;

use byzsgd::aggregation::{krum, mean, nan_last_cmp, phocas, select_kth, trimmed_mean};
use byzsgd::{AggregationRule, GradientBatch};
use common::{close, continuous_batch, finite_batch};
use proptest::prelude::*;
use proptest::sample::Index;

/// True when exactly one row attains the minimal Krum score.
fn unique_krum_winner(batch: &GradientBatch, q: usize) -> bool {
    let m = batch.m();
    let scores: Vec<f64> = (0..m)
        .map(|i| {
            let mut d: Vec<f64> = (0..m)
                .filter(|&j| j != i)
                .map(|j| batch.row(i).iter().zip(batch.row(j)).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            d.sort_by(f64::total_cmp);
            d[..m - q - 2].iter().sum()
        })
        .collect();
    let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    scores.iter().filter(|&&s| (s - best).abs() <= 1e-9 * best.abs().max(1e-300)).count() == 1
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| nan_last_cmp(*a, *b));
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // Krum and Phocas break exact ties by worker index, so invariance is
    // checked on tie-free inputs.
    #[test]
    fn rules_are_permutation_invariant(batch in continuous_batch(20, 6), seed in any::<u64>(), pick in any::<Index>()) {
        let m = batch.m();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut s = seed;
        for i in (1..m).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = batch.permute_rows(&perm).unwrap();
        let b = pick.index((m - 1) / 2 + 1);
        prop_assert!(close(&trimmed_mean(&batch, b).unwrap(), &trimmed_mean(&shuffled, b).unwrap(), 1e-12));
        prop_assert!(close(&phocas(&batch, b).unwrap(), &phocas(&shuffled, b).unwrap(), 1e-12));
        prop_assert!(close(&mean(&batch), &mean(&shuffled), 1e-12));
    }

    #[test]
    fn krum_is_permutation_invariant(batch in continuous_batch(20, 6), seed in any::<u64>(), pick in any::<Index>()) {
        let m = batch.m();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut s = seed;
        for i in (1..m).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled = batch.permute_rows(&perm).unwrap();
        let q = pick.index((m - 3) / 2 + 1);
        // mutual nearest neighbours tie structurally when only one
        // neighbour is scored
        prop_assume!(unique_krum_winner(&batch, q));
        let (v1, i1) = krum(&batch, q).unwrap();
        let (v2, i2) = krum(&shuffled, q).unwrap();
        prop_assert_eq!(&v1, &v2);
        prop_assert_eq!(perm[i2], i1);
    }

    #[test]
    fn rules_translate(batch in continuous_batch(15, 5), shift in -50.0..50.0f64, pick in any::<Index>()) {
        let z = vec![shift; batch.d()];
        let moved = batch.translate(&z).unwrap();
        let m = batch.m();
        let b = pick.index((m - 1) / 2 + 1);
        let plus = |v: Vec<f64>| v.into_iter().map(|x| x + shift).collect::<Vec<_>>();
        prop_assert!(close(&plus(mean(&batch)), &mean(&moved), 1e-9));
        prop_assert!(close(&plus(trimmed_mean(&batch, b).unwrap()), &trimmed_mean(&moved, b).unwrap(), 1e-9));
        prop_assert!(close(&plus(phocas(&batch, b).unwrap()), &phocas(&moved, b).unwrap(), 1e-9));
        let q = pick.index((m - 3) / 2 + 1);
        prop_assume!(unique_krum_winner(&batch, q));
        let (v, i) = krum(&batch, q).unwrap();
        let (vm, im) = krum(&moved, q).unwrap();
        prop_assert!(close(&plus(v), &vm, 1e-9));
        prop_assert_eq!(i, im);
    }

    #[test]
    fn coordinate_rules_are_separable(batch in finite_batch(15, 6), pick in any::<Index>()) {
        let b = pick.index((batch.m() - 1) / 2 + 1);
        let whole_t = trimmed_mean(&batch, b).unwrap();
        let whole_p = phocas(&batch, b).unwrap();
        for j in 0..batch.d() {
            let col = GradientBatch::from_flat(batch.column(j), batch.m(), 1).unwrap();
            prop_assert_eq!(trimmed_mean(&col, b).unwrap()[0], whole_t[j]);
            prop_assert_eq!(phocas(&col, b).unwrap()[0], whole_p[j]);
        }
    }

    #[test]
    fn outputs_lie_in_their_kept_range(batch in finite_batch(21, 4), pick in any::<Index>()) {
        let m = batch.m();
        let b = pick.index((m - 1) / 2 + 1);
        let t = trimmed_mean(&batch, b).unwrap();
        let p = phocas(&batch, b).unwrap();
        for j in 0..batch.d() {
            let col = batch.column(j);
            let lo = select_kth(&col, b + 1).unwrap();
            let hi = select_kth(&col, m - b).unwrap();
            let eps = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
            prop_assert!(t[j] >= lo - eps && t[j] <= hi + eps);
            let s = sorted(&col);
            prop_assert!(p[j] >= s[0] - eps && p[j] <= s[m - 1] + eps);
        }
    }

    #[test]
    fn zero_trim_is_the_mean(batch in finite_batch(12, 4)) {
        let avg = mean(&batch);
        prop_assert_eq!(&trimmed_mean(&batch, 0).unwrap(), &avg);
        prop_assert_eq!(&phocas(&batch, 0).unwrap(), &avg);
    }

    #[test]
    fn select_kth_matches_sort(values in prop::collection::vec(-100i32..100, 1..200), k in any::<Index>()) {
        let v: Vec<f64> = values.into_iter().map(f64::from).collect();
        let k = k.index(v.len()) + 1;
        prop_assert_eq!(select_kth(&v, k).unwrap(), sorted(&v)[k - 1]);
    }

    #[test]
    fn identical_rows_are_fixed_points(row in prop::collection::vec(-10.0..10.0f64, 1..6), m in 3usize..12) {
        let batch = GradientBatch::from_rows(&vec![row.clone(); m]).unwrap();
        for rule in [
            AggregationRule::Trmean { b: (m - 1) / 2 },
            AggregationRule::Phocas { b: (m - 1) / 2 },
            AggregationRule::Krum { q: (m - 3) / 2 },
        ] {
            prop_assert!(close(&rule.apply(&batch).unwrap().vector, &row, 1e-15));
        }
    }
}
