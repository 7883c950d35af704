//! Sampler against brute-force posterior enumeration.

mod common;

use common::{exact_posterior, gibbs_oracle};

#[test]
fn exact_posterior_is_symmetric_under_topic_swap() {
    let words = [0, 0, 1, 0, 1, 1];
    let p = exact_posterior(&words, 2, 2, 1.0, 0.5);
    assert_eq!(p.len(), 64);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for s in 0..64 {
        assert!((p[s] - p[63 - s]).abs() < 1e-12);
    }
}

#[test]
fn exact_posterior_single_word() {
    // One word: both topics equally likely.
    let p = exact_posterior(&[1], 2, 3, 0.3, 0.7);
    assert!((p[0] - 0.5).abs() < 1e-15);
}

#[test]
fn empirical_joint_matches_enumeration() {
    let check = gibbs_oracle(50_000, 17);
    assert_eq!(check.states, 64);
    assert!(check.tv < 0.05, "total variation {}", check.tv);
}
