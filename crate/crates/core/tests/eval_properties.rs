//! Property tests for the agreement metrics and perplexity binning.

mod common;

use proptest::prelude::*;
use seaterra::eval::{bin_perplexity, mutual_information, normalized_mi};
use seaterra::imageio::Interest;

fn labels(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (
        prop::collection::vec(0usize..5, n),
        prop::collection::vec(0usize..4, n),
    )
}

fn paired() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..80).prop_flat_map(labels)
}

proptest! {
    #[test]
    fn mi_is_symmetric((a, b) in paired()) {
        let ab = mutual_information(&a, &b).unwrap();
        let ba = mutual_information(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn mi_matches_entropy_identity((a, b) in paired()) {
        prop_assert!((mutual_information(&a, &b).unwrap() - common::mi_oracle(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn nmi_is_bounded((a, b) in paired()) {
        let v = normalized_mi(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn nmi_ignores_relabeling(
        (a, b) in paired(),
        perm in Just((0usize..5).collect::<Vec<_>>()).prop_shuffle(),
        offset in 0usize..100,
    ) {
        let relabeled: Vec<usize> = a.iter().map(|&x| perm[x] * 3 + offset).collect();
        let before = normalized_mi(&a, &b).unwrap();
        prop_assert!((before - normalized_mi(&relabeled, &b).unwrap()).abs() < 1e-12);
        prop_assert!((before - normalized_mi(&b, &relabeled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn bijections_score_one(
        a in prop::collection::vec(0usize..5, 2..60),
        perm in Just((0usize..5).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        prop_assume!(a.iter().any(|&x| x != a[0]));
        let b: Vec<usize> = a.iter().map(|&x| perm[x]).collect();
        prop_assert!((normalized_mi(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn merging_classes_scores_below_one(a in prop::collection::vec(0usize..4, 2..60)) {
        // Collapsing classes 0 and 1 loses the bijection whenever both occur.
        prop_assume!(a.contains(&0) && a.contains(&1));
        let b: Vec<usize> = a.iter().map(|&x| x.max(1)).collect();
        prop_assert!(normalized_mi(&a, &b).unwrap() < 1.0 - 1e-12);
    }

    #[test]
    fn bins_partition_series(series in prop::collection::vec(0.0f64..500.0, 1..200)) {
        let bins = bin_perplexity(&series).unwrap();
        prop_assert_eq!(bins.bins.len(), series.len());
        prop_assert!(bins.medium_threshold() <= bins.high_threshold());
        for (&x, &b) in series.iter().zip(&bins.bins) {
            let expected = if x <= bins.medium_threshold() {
                Interest::Low
            } else if x <= bins.high_threshold() {
                Interest::Medium
            } else {
                Interest::High
            };
            prop_assert_eq!(b, expected);
        }
    }
}
