use serde::{Deserialize, Serialize};

use super::SubjectSession;
use crate::error::{contract, Result};

/// Standard deviations below this are treated as this value.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-modality, per-feature mean and standard deviation, pooled over every
/// step of every training window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
}

impl Normalizer {
    pub fn fit(train: &[SubjectSession]) -> Result<Self> {
        let Some(first) = train.iter().flat_map(|s| &s.windows).next() else {
            return contract("normalizer needs at least one training window");
        };
        let dims: Vec<usize> = first.features.iter().map(|x| x.cols()).collect();
        let mut sums: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
        let mut constant: Vec<Vec<Option<f64>>> = first
            .features
            .iter()
            .map(|x| (0..x.cols()).map(|j| Some(x.get(0, j))).collect())
            .collect();
        let mut count = 0usize;
        for w in train.iter().flat_map(|s| &s.windows) {
            for ((x, acc), same) in w.features.iter().zip(sums.iter_mut()).zip(constant.iter_mut()) {
                for t in 0..x.rows() {
                    for ((a, v), c) in acc.iter_mut().zip(x.row(t)).zip(same.iter_mut()) {
                        *a += v;
                        if *c != Some(*v) {
                            *c = None;
                        }
                    }
                }
            }
            count += w.seq_len();
        }
        let n = count as f64;
        // a feature that never changes gets its exact value as mean
        let means: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(constant)
            .map(|(s, c)| s.into_iter().zip(c).map(|(v, c)| c.unwrap_or(v / n)).collect())
            .collect();

        let mut sq: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
        for w in train.iter().flat_map(|s| &s.windows) {
            for ((x, acc), mu) in w.features.iter().zip(sq.iter_mut()).zip(&means) {
                for t in 0..x.rows() {
                    for ((a, v), m) in acc.iter_mut().zip(x.row(t)).zip(mu) {
                        *a += (v - m) * (v - m);
                    }
                }
            }
        }
        let stds = sq
            .into_iter()
            .map(|s| s.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect())
            .collect();
        Ok(Self { means, stds })
    }

    pub fn apply(&self, session: &mut SubjectSession) -> Result<()> {
        for w in &mut session.windows {
            if w.features.len() != self.means.len() {
                return contract("normalizer and window disagree on modality count");
            }
            for ((x, mu), sd) in w.features.iter_mut().zip(&self.means).zip(&self.stds) {
                if x.cols() != mu.len() {
                    return contract("normalizer and window disagree on feature dims");
                }
                for t in 0..x.rows() {
                    for ((v, m), s) in x.row_mut(t).iter_mut().zip(mu).zip(sd) {
                        *v = (*v - m) / s;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Fit on `train`, then normalize every session in `all`.
pub fn zscore_fit_apply(train: &[SubjectSession], all: &mut [SubjectSession]) -> Result<Normalizer> {
    let normalizer = Normalizer::fit(train)?;
    for s in all.iter_mut() {
        normalizer.apply(s)?;
    }
    Ok(normalizer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GeneratorConfig};

    #[test]
    fn training_features_are_standardized() {
        let cfg = GeneratorConfig {
            train_subjects: 3,
            test_subjects: 2,
            windows_per_subject: 40,
            ..GeneratorConfig::desk()
        };
        let d = generate(&cfg).unwrap();
        let (n, _) = d.normalized().unwrap();
        let check = Normalizer::fit(&n.train).unwrap();
        for (mu, sd) in check.means.iter().zip(&check.stds) {
            for (&m, &s) in mu.iter().zip(sd) {
                assert!(m.abs() < 1e-9, "mean {m}");
                assert!((s - 1.0).abs() < 1e-6, "std {s}");
            }
        }
        for s in &n.test {
            for w in &s.windows {
                assert!(w.features.iter().all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let cfg = GeneratorConfig {
            train_subjects: 1,
            test_subjects: 1,
            windows_per_subject: 10,
            ..GeneratorConfig::desk()
        };
        let mut d = generate(&cfg).unwrap();
        for s in d.train.iter_mut().chain(d.test.iter_mut()) {
            for w in &mut s.windows {
                for t in 0..w.features[0].rows() {
                    w.features[0].set(t, 0, 4.2);
                }
            }
        }
        let mut all = vec![d.train[0].clone(), d.test[0].clone()];
        let norm = zscore_fit_apply(&d.train, &mut all).unwrap();
        assert_eq!(norm.stds[0][0], STD_FLOOR);
        for s in &all {
            for w in &s.windows {
                for t in 0..w.features[0].rows() {
                    assert_eq!(w.features[0].get(t, 0), 0.0);
                }
            }
        }
    }

    #[test]
    fn empty_training_set_is_error() {
        assert!(Normalizer::fit(&[]).is_err());
    }
}
