//! Randomized checks of the softmax bounds against the exact log-probability.

use ove::bounds::{
    bouchard_log_bound, bouchard_lse_upper, hierarchical_log_bound, log_softmax_prob, log_sum_exp, optimize_alpha,
    ove_log_bound, LabelPartition, ScoreVector,
};
use proptest::prelude::*;

const SLACK: f64 = 1e-12;

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..20.0, 2..40)
}

fn scores_and_class() -> impl Strategy<Value = (Vec<f64>, usize)> {
    scores().prop_flat_map(|f| {
        let k = f.len();
        (Just(f), 0..k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ove_is_below_exact((f, k) in scores_and_class()) {
        let s = ScoreVector::new(f).unwrap();
        let exact = log_softmax_prob(&s, k).unwrap();
        prop_assert!(ove_log_bound(&s, k).unwrap() <= exact + SLACK * (1.0 + exact.abs()));
    }

    #[test]
    fn bouchard_is_below_exact_for_any_alpha((f, k) in scores_and_class(), a in -30.0f64..30.0) {
        let s = ScoreVector::new(f).unwrap();
        let exact = log_softmax_prob(&s, k).unwrap();
        for alpha in [a, optimize_alpha(&s).unwrap()] {
            let b = bouchard_log_bound(&s, k, alpha).unwrap();
            prop_assert!(b <= exact + SLACK * (1.0 + exact.abs()), "alpha {}: {} > {}", alpha, b, exact);
        }
    }

    #[test]
    fn lse_upper_bound_holds(f in scores(), a in -30.0f64..30.0) {
        let s = ScoreVector::new(f).unwrap();
        let z = log_sum_exp(&s);
        prop_assert!(bouchard_lse_upper(&s, a).unwrap() >= z - SLACK * (1.0 + z.abs()));
        let best = bouchard_lse_upper(&s, optimize_alpha(&s).unwrap()).unwrap();
        prop_assert!(best <= bouchard_lse_upper(&s, a).unwrap() + SLACK * (1.0 + best.abs()));
    }

    #[test]
    fn ove_probabilities_sum_to_at_most_one(f in scores()) {
        let s = ScoreVector::new(f).unwrap();
        let total: f64 = (0..s.len()).map(|k| ove_log_bound(&s, k).unwrap().exp()).sum();
        prop_assert!(total <= 1.0 + 1e-12, "sum {}", total);
    }

    #[test]
    fn merging_blocks_never_loosens((f, k) in scores_and_class(), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..40)) {
        let s = ScoreVector::new(f).unwrap();
        let exact = log_softmax_prob(&s, k).unwrap();
        let mut p = LabelPartition::singletons(s.len(), k).unwrap();
        let mut prev = hierarchical_log_bound(&s, &p).unwrap();
        let ove = ove_log_bound(&s, k).unwrap();
        prop_assert!((prev - ove).abs() <= 1e-12 * (1.0 + ove.abs()));
        for pick in picks {
            let nb = p.blocks().len();
            if nb < 2 {
                break;
            }
            let i = pick.index(nb);
            let j = (i + 1 + pick.index(nb - 1)) % nb;
            p = p.merge(i, j).unwrap();
            let next = hierarchical_log_bound(&s, &p).unwrap();
            prop_assert!(next >= prev - 1e-12 * (1.0 + prev.abs()), "{} < {}", next, prev);
            prop_assert!(next <= exact + 1e-12 * (1.0 + exact.abs()));
            prev = next;
        }
    }

    #[test]
    fn bounds_are_shift_invariant((f, k) in scores_and_class(), c in -50.0f64..50.0) {
        let s = ScoreVector::new(f).unwrap();
        let t = s.shifted(c).unwrap();
        let (a, b) = (ove_log_bound(&s, k).unwrap(), ove_log_bound(&t, k).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        let (a, b) = (log_softmax_prob(&s, k).unwrap(), log_softmax_prob(&t, k).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn single_precision_tracks_double((f, k) in scores_and_class()) {
        let s64 = ScoreVector::new(f.clone()).unwrap();
        let s32 = ScoreVector::new(f.iter().map(|&v| v as f32).collect()).unwrap();
        let a = ove_log_bound(&s64, k).unwrap();
        let b = f64::from(ove_log_bound(&s32, k).unwrap());
        prop_assert!((a - b).abs() <= 1e-4 * (1.0 + a.abs()));
    }
}

#[test]
fn single_block_partition_is_exact() {
    let s = ScoreVector::from_f64(&[3.0, 1.0, 0.0, -2.0, 5.0]).unwrap();
    for k in 0..5 {
        let p = LabelPartition::single_block(5, k).unwrap();
        let exact: f64 = log_softmax_prob(&s, k).unwrap();
        assert!((hierarchical_log_bound(&s, &p).unwrap() - exact).abs() < 1e-13);
    }
}
