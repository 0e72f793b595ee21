//! Adapting a group-trained ensemble to one new subject, and the accuracy /
//! macro-F1 metrics used to score it.
//!
//! The subject's windows are shuffled and streamed past a query strategy.
//! Windows it asks about are labelled by the oracle (the stored ground
//! truth), removed from the evaluation set and used to fine-tune a copy of
//! the ensemble. Both the original and the adapted ensemble are then scored
//! on the windows that were not queried.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{MultiModalWindow, SubjectId, SubjectSession, NUM_CLASSES};
use crate::error::{config, contract, Result};
use crate::models::{Ensemble, QNetwork};
use crate::policy::{BaselineStrategy, RandomSelector, RewardSpec, StateMode, UncertaintySelector};
use crate::seeding;
use crate::trainer::{scan_stream, Chooser};

/// Accuracy and macro-F1 in percent plus the confusion counts
/// (`confusion[truth][predicted]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub support: usize,
}

/// Scores predictions against labels.
///
/// Macro-F1 averages the per-class F1 of every class that appears among the
/// labels or the predictions; classes absent from both are skipped.
pub fn compute_metrics(predictions: &[usize], labels: &[usize]) -> Result<Metrics> {
    if predictions.is_empty() {
        return contract("metrics need at least one prediction");
    }
    if predictions.len() != labels.len() {
        return contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        ));
    }
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= NUM_CLASSES || y >= NUM_CLASSES {
            return contract(format!("class index out of range: predicted {p}, label {y}"));
        }
        confusion[y][p] += 1;
    }
    Ok(metrics_from_confusion(confusion))
}

pub fn metrics_from_confusion(confusion: [[usize; NUM_CLASSES]; NUM_CLASSES]) -> Metrics {
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
    let mut f1_sum = 0.0;
    let mut classes = 0;
    for c in 0..NUM_CLASSES {
        let actual: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        if actual == 0 && predicted == 0 {
            continue;
        }
        classes += 1;
        // F1 = 2TP / (2TP + FP + FN) = 2TP / (actual + predicted)
        f1_sum += 2.0 * confusion[c][c] as f64 / (actual + predicted) as f64;
    }
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { 100.0 * a / b };
    Metrics {
        accuracy: ratio(correct as f64, total as f64),
        macro_f1: ratio(f1_sum, classes as f64),
        confusion,
        support: total,
    }
}

/// How windows are chosen for labelling on a new subject.
#[derive(Clone, Copy, Debug)]
pub enum Querier<'a> {
    /// Greedy use of a trained Q-network; it is never updated.
    Policy { q: &'a QNetwork, mode: StateMode },
    Baseline(BaselineStrategy),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonalizationResult {
    pub subject: SubjectId,
    pub budget: usize,
    pub budget_used: usize,
    /// Window indices (as stored in the session) that were labelled.
    pub queried: Vec<usize>,
    /// Windows examined before the budget filled, or the session length.
    pub scanned: usize,
    /// Number of windows left for evaluation.
    pub evaluated: usize,
    /// Set when every window was queried and nothing is left to score.
    pub empty_evaluation: bool,
    pub before: Option<Metrics>,
    pub after: Option<Metrics>,
}

impl PersonalizationResult {
    pub fn gain(&self) -> Option<f64> {
        Some(self.after.as_ref()?.accuracy - self.before.as_ref()?.accuracy)
    }
}

/// Adapts a copy of `ensemble` to `session` and scores it before and after.
///
/// `epochs` fine-tuning passes run over the queried windows with fresh
/// optimizer state. A budget of zero only evaluates.
pub fn personalize_subject(
    session: &SubjectSession,
    ensemble: &Ensemble,
    querier: Querier<'_>,
    budget: usize,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(PersonalizationResult, Ensemble)> {
    if session.windows.is_empty() {
        return config(format!("subject {} has no windows", session.subject));
    }
    if let Some(w) = session.windows.iter().find(|w| w.label.is_none()) {
        return config(format!("window {} of subject {} has no label", w.index, session.subject));
    }
    let mut stream: Vec<&MultiModalWindow> = session.windows.iter().collect();
    stream.shuffle(rng);

    let modalities = ensemble.modalities();
    let mut chooser = match querier {
        Querier::Policy { q, mode } => Chooser::Frozen { q, mode, modalities },
        Querier::Baseline(BaselineStrategy::Rnd) => Chooser::Random(RandomSelector::for_budget(budget, stream.len())),
        Querier::Baseline(BaselineStrategy::Unc) => {
            Chooser::Uncertainty(UncertaintySelector::new(budget, stream.len()))
        }
    };
    let scan = scan_stream(&stream, ensemble, &mut chooser, budget, &RewardSpec::default(), rng)?;
    if scan.labeled.len() > budget {
        return contract(format!("acquired {} labels with a budget of {budget}", scan.labeled.len()));
    }

    let mut is_queried = vec![false; stream.len()];
    for &i in &scan.labeled {
        is_queried[i] = true;
    }
    let pool: Vec<(&MultiModalWindow, usize)> = scan
        .labeled
        .iter()
        .map(|&i| (stream[i], stream[i].label.expect("checked above")))
        .collect();
    let remaining: Vec<&MultiModalWindow> = stream
        .iter()
        .zip(&is_queried)
        .filter(|(_, &q)| !q)
        .map(|(w, _)| *w)
        .collect();
    let labels: Vec<usize> = remaining.iter().map(|w| w.label.expect("checked above")).collect();

    let before = if remaining.is_empty() {
        None
    } else {
        Some(compute_metrics(&ensemble.predict_batch(&remaining)?, &labels)?)
    };
    let mut adapted = ensemble.clone();
    let after = if pool.is_empty() {
        before.clone()
    } else {
        adapted.reset_optimizers();
        adapted.train(&pool, epochs, rng)?;
        if remaining.is_empty() {
            None
        } else {
            Some(compute_metrics(&adapted.predict_batch(&remaining)?, &labels)?)
        }
    };

    let result = PersonalizationResult {
        subject: session.subject,
        budget,
        budget_used: pool.len(),
        queried: scan.labeled.iter().map(|&i| stream[i].index).collect(),
        scanned: scan.scanned,
        evaluated: remaining.len(),
        empty_evaluation: remaining.is_empty(),
        before,
        after,
    };
    Ok((result, adapted))
}

/// Runs [`personalize_subject`] `repeats` times with independent shuffles,
/// each starting from the same group ensemble.
pub fn personalize_repeated(
    session: &SubjectSession,
    ensemble: &Ensemble,
    querier: Querier<'_>,
    budget: usize,
    epochs: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<PersonalizationResult>> {
    (0..repeats)
        .map(|r| {
            let mut rng = seeding::rng(seeding::derive(seed, &[session.subject as u64, r as u64]));
            personalize_subject(session, ensemble, querier, budget, epochs, &mut rng).map(|(res, _)| res)
        })
        .collect()
}

/// Means of before/after accuracy and macro-F1 over results that have an
/// evaluation set: `[acc_before, acc_after, f1_before, f1_after]`.
pub fn mean_metrics(results: &[PersonalizationResult]) -> Option<[f64; 4]> {
    let scored: Vec<(&Metrics, &Metrics)> = results
        .iter()
        .filter_map(|r| Some((r.before.as_ref()?, r.after.as_ref()?)))
        .collect();
    if scored.is_empty() {
        return None;
    }
    let n = scored.len() as f64;
    let mut acc = [0.0; 4];
    for (b, a) in &scored {
        acc[0] += b.accuracy;
        acc[1] += a.accuracy;
        acc[2] += b.macro_f1;
        acc[3] += a.macro_f1;
    }
    Some(acc.map(|v| v / n))
}

/// Before and after metrics over the summed confusion matrices of every
/// result with an evaluation set.
pub fn pooled_metrics(results: &[PersonalizationResult]) -> Option<(Metrics, Metrics)> {
    let mut before = [[0; NUM_CLASSES]; NUM_CLASSES];
    let mut after = [[0; NUM_CLASSES]; NUM_CLASSES];
    let mut any = false;
    for r in results {
        let (Some(b), Some(a)) = (&r.before, &r.after) else {
            continue;
        };
        any = true;
        for t in 0..NUM_CLASSES {
            for p in 0..NUM_CLASSES {
                before[t][p] += b.confusion[t][p];
                after[t][p] += a.confusion[t][p];
            }
        }
    }
    any.then(|| (metrics_from_confusion(before), metrics_from_confusion(after)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GeneratorConfig};
    use crate::fusion::FusionMode;
    use crate::models::ClassifierConfig;
    use crate::numerics::Matrix;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap();
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.macro_f1, 100.0);
    }

    #[test]
    fn half_right_two_classes() {
        let m = compute_metrics(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.accuracy, 50.0);
        assert_eq!(m.macro_f1, 50.0);
        assert_eq!(m.confusion, [[1, 1, 0], [1, 1, 0], [0, 0, 0]]);
    }

    #[test]
    fn majority_predictor_on_imbalanced_set() {
        let mut labels = vec![0; 90];
        labels.extend([1; 5]);
        labels.extend([2; 5]);
        let m = compute_metrics(&[0; 100], &labels).unwrap();
        assert_eq!(m.accuracy, 90.0);
        // class 0: 2*90/(90+100); classes 1 and 2 score 0
        let expected = 100.0 * (180.0 / 190.0) / 3.0;
        assert!((m.macro_f1 - expected).abs() < 1e-12);
        assert!(m.accuracy > m.macro_f1);
    }

    #[test]
    fn bad_inputs() {
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[0], &[0, 1]).is_err());
        assert!(compute_metrics(&[3], &[0]).is_err());
    }

    fn setup() -> (SubjectSession, Ensemble) {
        let d = generate(&GeneratorConfig {
            train_subjects: 1,
            test_subjects: 1,
            windows_per_subject: 30,
            seq_len: 3,
            ..GeneratorConfig::desk()
        })
        .unwrap();
        let mut rng = seeding::rng(2);
        let cfg = ClassifierConfig {
            hidden: 4,
            ..ClassifierConfig::default()
        };
        let ens = Ensemble::new(&d.schema, FusionMode::ModelLevel, &cfg, &mut rng).unwrap();
        (d.test[0].clone(), ens)
    }

    #[test]
    fn zero_budget_only_evaluates() {
        let (session, ens) = setup();
        let mut rng = seeding::rng(1);
        let (res, adapted) =
            personalize_subject(&session, &ens, Querier::Baseline(BaselineStrategy::Unc), 0, 10, &mut rng).unwrap();
        assert_eq!(res.budget_used, 0);
        assert_eq!(res.evaluated, 30);
        assert_eq!(res.before, res.after);
        assert_eq!(adapted.members[0].classifier.net.head_w, ens.members[0].classifier.net.head_w);
    }

    #[test]
    fn always_ask_with_full_budget_leaves_nothing_to_score() {
        let (session, ens) = setup();
        let mut rng = seeding::rng(4);
        let mut q = QNetwork::new(16, 1, 3, &mut rng);
        q.net.head_b = Matrix::row_vector(&[0.0, 1e6]);
        let snapshot = q.clone();
        let querier = Querier::Policy {
            q: &q,
            mode: StateMode::Cont0,
        };
        let (res, _) = personalize_subject(&session, &ens, querier, 30, 1, &mut rng).unwrap();
        assert!(res.empty_evaluation);
        assert_eq!(res.budget_used, 30);
        assert!(res.before.is_none() && res.after.is_none());
        assert_eq!(q.net.head_w, snapshot.net.head_w);

        let (res, _) = personalize_subject(&session, &ens, querier, 7, 1, &mut rng).unwrap();
        assert_eq!(res.budget_used, 7);
        assert_eq!(res.evaluated, 23);
        let mut q_idx = res.queried.clone();
        q_idx.sort();
        q_idx.dedup();
        assert_eq!(q_idx.len(), 7);
    }

    #[test]
    fn repeated_runs_differ_by_shuffle_only() {
        let (session, ens) = setup();
        let a = personalize_repeated(&session, &ens, Querier::Baseline(BaselineStrategy::Rnd), 5, 1, 3, 9).unwrap();
        let b = personalize_repeated(&session, &ens, Querier::Baseline(BaselineStrategy::Rnd), 5, 1, 3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|r| r.budget_used <= 5));
    }

    proptest! {
        #[test]
        fn metrics_ignore_sample_order(
            pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..40),
            seed in any::<u64>(),
        ) {
            let (p, y): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let m = compute_metrics(&p, &y).unwrap();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut seeding::rng(seed));
            let (p2, y2): (Vec<usize>, Vec<usize>) = shuffled.into_iter().unzip();
            prop_assert_eq!(compute_metrics(&p2, &y2).unwrap(), m.clone());
            prop_assert!((0.0..=100.0).contains(&m.accuracy));
            prop_assert!((0.0..=100.0).contains(&m.macro_f1));
        }
    }
}
