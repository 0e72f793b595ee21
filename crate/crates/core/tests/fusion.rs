use mmal::fusion::{confidence, majority_vote, EnsembleOutput};
use mmal::seeding;
use proptest::prelude::*;
use rand::Rng;

/// Straightforward restatement of the vote: count, collect the tied top
/// classes, then take the highest-confidence voter among them, breaking a
/// confidence tie towards the lower class.
fn oracle(classes: &[usize], confidences: &[f64]) -> usize {
    let mut counts = [0usize; 3];
    for &c in classes {
        counts[c] += 1;
    }
    let top = *counts.iter().max().unwrap();
    let tied: Vec<usize> = (0..3).filter(|&c| counts[c] == top).collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let best_conf = classes
        .iter()
        .zip(confidences)
        .filter(|(c, _)| tied.contains(c))
        .map(|(_, &f)| f)
        .fold(f64::NEG_INFINITY, f64::max);
    classes
        .iter()
        .zip(confidences)
        .filter(|(c, &f)| tied.contains(c) && f == best_conf)
        .map(|(&c, _)| c)
        .min()
        .unwrap()
}

fn output(classes: &[usize], confidences: &[f64]) -> EnsembleOutput {
    EnsembleOutput {
        probs: vec![vec![1.0 / 3.0; 3]; classes.len()],
        classes: classes.to_vec(),
        confidences: confidences.to_vec(),
    }
}

#[test]
fn majority_vote_agrees_with_brute_force_oracle() {
    let mut rng = seeding::rng(77);
    let mut cases = 0;
    let mut ties = 0;
    while cases < 10_000 {
        for combo in 0..81 {
            let classes: Vec<usize> = (0..4).map(|m| (combo / 3usize.pow(m)) % 3).collect();
            // Coarse confidences make confidence ties common.
            let confidences: Vec<f64> = if cases % 2 == 0 {
                (0..4).map(|_| rng.gen_range(0..4) as f64 / 4.0).collect()
            } else {
                (0..4).map(|_| rng.gen::<f64>()).collect()
            };
            let expected = oracle(&classes, &confidences);
            let got = majority_vote(&output(&classes, &confidences));
            assert_eq!(got, expected, "classes {classes:?} confidences {confidences:?}");
            let mut counts = [0; 3];
            classes.iter().for_each(|&c| counts[c] += 1);
            if counts.iter().filter(|&&n| n == *counts.iter().max().unwrap()).count() > 1 {
                ties += 1;
            }
            cases += 1;
            if cases == 10_000 {
                break;
            }
        }
    }
    assert!(ties > 1000);
}

#[test]
fn documented_vote_cases() {
    assert_eq!(majority_vote(&output(&[0, 0, 1, 2], &[0.1, 0.1, 0.9, 0.9])), 0);
    assert_eq!(majority_vote(&output(&[1, 1, 2, 2], &[0.2, 0.3, 0.9, 0.1])), 2);
    assert_eq!(majority_vote(&output(&[1, 1, 1, 1], &[0.0; 4])), 1);
    assert_eq!(majority_vote(&output(&[2, 2, 1, 1], &[0.5; 4])), 1);
}

#[test]
fn confidence_endpoints() {
    assert!(confidence(&[1.0 / 3.0; 3]).abs() < 1e-12);
    assert!((confidence(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
    let half = 1.0 - 2f64.ln() / 3f64.ln();
    assert!((confidence(&[0.5, 0.5, 0.0]) - half).abs() < 1e-12);
    assert!((half - 0.3691).abs() < 1e-4);
}

proptest! {
    #[test]
    fn strict_majority_ignores_member_order(
        classes in prop::collection::vec(0usize..3, 4),
        confidences in prop::collection::vec(0.0f64..1.0, 4),
        rot in 0usize..4,
    ) {
        let mut counts = [0; 3];
        classes.iter().for_each(|&c| counts[c] += 1);
        let top = *counts.iter().max().unwrap();
        prop_assume!(counts.iter().filter(|&&n| n == top).count() == 1);
        let mut c2 = classes.clone();
        let mut f2 = confidences.clone();
        c2.rotate_left(rot);
        f2.rotate_left(rot);
        prop_assert_eq!(majority_vote(&output(&classes, &confidences)), majority_vote(&output(&c2, &f2)));
    }

    #[test]
    fn confidence_is_bounded_and_permutation_invariant(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let s = a + b + c;
        prop_assume!(s > 1e-9);
        let p = [a / s, b / s, c / s];
        let q = [p[2], p[0], p[1]];
        let cp = confidence(&p);
        prop_assert!((0.0..=1.0).contains(&cp));
        prop_assert!((cp - confidence(&q)).abs() < 1e-12);
    }
}
