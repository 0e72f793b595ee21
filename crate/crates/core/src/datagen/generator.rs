use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::{Dataset, Modality, MultiModalWindow, Schema, SubjectId, SubjectSession, NUM_CLASSES};
use crate::error::{config, Result};
use crate::numerics::Matrix;
use crate::seeding;

/// Knobs of the synthetic session generator.
///
/// Every class has a group-level prototype sequence per modality. Each
/// subject draws its own class prior and a persistent offset of its
/// class-conditional means (scaled by `subject_shift`); windows are the
/// shifted prototype plus AR(1) noise along the time axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub train_subjects: usize,
    pub test_subjects: usize,
    pub windows_per_subject: usize,
    pub seq_len: usize,
    pub modalities: Vec<Modality>,
    /// Spread of the class prototypes per modality; larger is easier.
    pub class_separation: Vec<f64>,
    /// Dirichlet concentration for per-subject class priors.
    pub prior_concentration: f64,
    /// Chance that a subject has no windows at all of a given class.
    pub missing_class_prob: f64,
    /// Explicit priors, train subjects first then test subjects.
    pub subject_priors: Option<Vec<[f64; NUM_CLASSES]>>,
    pub subject_shift: f64,
    /// AR(1) coefficient of the within-window noise, in [0, 1).
    pub temporal_smoothness: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl GeneratorConfig {
    /// Small dimensions for fast runs.
    pub fn desk() -> Self {
        Self {
            train_subjects: 6,
            test_subjects: 4,
            windows_per_subject: 120,
            seq_len: 10,
            modalities: vec![
                Modality::new("FACE", 8),
                Modality::new("BODY", 6),
                Modality::new("A-PHYS", 4),
                Modality::new("AUDIO", 4),
            ],
            class_separation: vec![1.0, 1.2, 0.6, 0.8],
            prior_concentration: 1.0,
            missing_class_prob: 0.25,
            subject_priors: None,
            subject_shift: 1.0,
            temporal_smoothness: 0.7,
            noise_scale: 1.0,
            seed: 0,
        }
    }

    /// Full feature dimensions (257/70/27/24, 378 in total).
    pub fn full() -> Self {
        Self {
            train_subjects: 20,
            test_subjects: 14,
            windows_per_subject: 1500,
            modalities: vec![
                Modality::new("FACE", 257),
                Modality::new("BODY", 70),
                Modality::new("A-PHYS", 27),
                Modality::new("AUDIO", 24),
            ],
            ..Self::desk()
        }
    }

    pub fn schema(&self) -> Schema {
        Schema::new(self.seq_len, self.modalities.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_subjects == 0 {
            return config("at least one training subject is required");
        }
        if self.seq_len == 0 || self.windows_per_subject == 0 {
            return config("seq_len and windows_per_subject must be positive");
        }
        if self.modalities.is_empty() || self.modalities.iter().any(|m| m.dim == 0) {
            return config("modality dims must be positive");
        }
        if self.class_separation.len() != self.modalities.len() {
            return config("class_separation needs one entry per modality");
        }
        if !(0.0..1.0).contains(&self.temporal_smoothness) {
            return config("temporal_smoothness must lie in [0, 1)");
        }
        if self.subject_shift < 0.0 || self.noise_scale < 0.0 || self.prior_concentration <= 0.0 {
            return config("shift and noise must be non-negative, concentration positive");
        }
        if !(0.0..=1.0).contains(&self.missing_class_prob) {
            return config("missing_class_prob must lie in [0, 1]");
        }
        if let Some(priors) = &self.subject_priors {
            if priors.len() != self.train_subjects + self.test_subjects {
                return config("subject_priors needs one entry per subject");
            }
            for p in priors {
                if p.iter().any(|&v| v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return config(format!("prior {p:?} is not a distribution"));
                }
            }
        }
        Ok(())
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

/// Gaussian sequence whose rows follow an AR(1) process with unit
/// stationary variance, times `scale`.
fn smooth_noise(rng: &mut ChaCha8Rng, steps: usize, dim: usize, rho: f64, scale: f64) -> Matrix {
    let mut out = gaussian_matrix(rng, steps, dim, 1.0);
    let innovation = (1.0 - rho * rho).sqrt();
    for t in 1..steps {
        for j in 0..dim {
            let v = rho * out.get(t - 1, j) + innovation * out.get(t, j);
            out.set(t, j, v);
        }
    }
    out.map(|v| v * scale)
}

fn sample_prior(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> [f64; NUM_CLASSES] {
    let gamma = Gamma::new(cfg.prior_concentration, 1.0).expect("positive concentration");
    let mut p = [0.0; NUM_CLASSES];
    for v in p.iter_mut() {
        *v = gamma.sample(rng).max(1e-12);
    }
    let keep = crate::numerics::argmax(&p);
    for (k, v) in p.iter_mut().enumerate() {
        if k != keep && rng.gen::<f64>() < cfg.missing_class_prob {
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    p.map(|v| v / total)
}

/// Class prototypes: `[class][modality]`, each `seq_len × dim`.
fn prototypes(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> Vec<Vec<Matrix>> {
    (0..NUM_CLASSES)
        .map(|_| {
            cfg.modalities
                .iter()
                .zip(&cfg.class_separation)
                .map(|(m, &sep)| {
                    let level = gaussian_matrix(rng, 1, m.dim, sep);
                    let wiggle = smooth_noise(rng, cfg.seq_len, m.dim, 0.9, 0.3 * sep);
                    let mut proto = wiggle;
                    for t in 0..cfg.seq_len {
                        for (v, l) in proto.row_mut(t).iter_mut().zip(level.data()) {
                            *v += l;
                        }
                    }
                    proto
                })
                .collect()
        })
        .collect()
}

fn generate_subject(
    cfg: &GeneratorConfig,
    protos: &[Vec<Matrix>],
    subject: SubjectId,
    prior: Option<[f64; NUM_CLASSES]>,
) -> SubjectSession {
    let mut rng = seeding::rng(seeding::derive(cfg.seed, &[1, subject as u64]));
    let prior = prior.unwrap_or_else(|| sample_prior(&mut rng, cfg));
    // per class, per modality: one offset row shared by every step
    let offsets: Vec<Vec<Matrix>> = (0..NUM_CLASSES)
        .map(|_| {
            cfg.modalities
                .iter()
                .map(|m| gaussian_matrix(&mut rng, 1, m.dim, cfg.subject_shift))
                .collect()
        })
        .collect();
    let classes = WeightedIndex::new(prior).expect("prior has positive mass");

    let windows = (0..cfg.windows_per_subject)
        .map(|index| {
            let label = classes.sample(&mut rng);
            let features = cfg
                .modalities
                .iter()
                .enumerate()
                .map(|(m, modality)| {
                    let mut x = smooth_noise(
                        &mut rng,
                        cfg.seq_len,
                        modality.dim,
                        cfg.temporal_smoothness,
                        cfg.noise_scale,
                    );
                    let proto = &protos[label][m];
                    let offset = &offsets[label][m];
                    for t in 0..cfg.seq_len {
                        for ((v, p), o) in x.row_mut(t).iter_mut().zip(proto.row(t)).zip(offset.data()) {
                            *v += p + o;
                        }
                    }
                    x
                })
                .collect();
            MultiModalWindow {
                subject,
                index,
                label: Some(label),
                features,
            }
        })
        .collect();
    SubjectSession { subject, windows }
}

/// Build a synthetic dataset; the same config always yields the same data.
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = seeding::rng(seeding::derive(cfg.seed, &[0]));
    let protos = prototypes(&mut rng, cfg);
    let total = cfg.train_subjects + cfg.test_subjects;
    let sessions: Vec<SubjectSession> = (0..total)
        .map(|s| {
            let prior = cfg.subject_priors.as_ref().map(|p| p[s]);
            generate_subject(cfg, &protos, s as SubjectId, prior)
        })
        .collect();
    let mut sessions = sessions.into_iter();
    let train = sessions.by_ref().take(cfg.train_subjects).collect();
    let test = sessions.collect();
    Ok(Dataset {
        schema: cfg.schema(),
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GeneratorConfig {
        GeneratorConfig {
            train_subjects: 2,
            test_subjects: 1,
            windows_per_subject: 30,
            ..GeneratorConfig::desk()
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate(&tiny()).unwrap();
        let b = generate(&tiny()).unwrap();
        assert_eq!(a, b);
        let mut other = tiny();
        other.seed = 1;
        assert_ne!(a, generate(&other).unwrap());
    }

    #[test]
    fn windows_respect_schema() {
        let d = generate(&tiny()).unwrap();
        d.validate().unwrap();
        assert_eq!(d.train.len(), 2);
        assert_eq!(d.test.len(), 1);
        assert_eq!(d.test[0].subject, 2);
    }

    #[test]
    fn explicit_prior_with_single_class() {
        let mut cfg = tiny();
        cfg.subject_priors = Some(vec![[0.0, 0.0, 1.0], [0.5, 0.5, 0.0], [1.0, 0.0, 0.0]]);
        let d = generate(&cfg).unwrap();
        assert_eq!(d.train[0].class_counts(), [0, 0, 30]);
        assert_eq!(d.train[1].class_counts()[2], 0);
        assert_eq!(d.test[0].class_counts(), [30, 0, 0]);
    }

    #[test]
    fn zero_shift_makes_subjects_identically_distributed() {
        let mut cfg = tiny();
        cfg.subject_shift = 0.0;
        cfg.noise_scale = 0.0;
        cfg.subject_priors = Some(vec![[1.0, 0.0, 0.0]; 3]);
        let d = generate(&cfg).unwrap();
        // with no noise and no shift every class-0 window equals the prototype
        let a = &d.train[0].windows[0].features;
        let b = &d.test[0].windows[5].features;
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = tiny();
        cfg.class_separation.pop();
        assert!(generate(&cfg).is_err());
        let mut cfg = tiny();
        cfg.subject_priors = Some(vec![[0.5, 0.5, 0.5]; 3]);
        assert!(generate(&cfg).is_err());
        let mut cfg = tiny();
        cfg.modalities[0].dim = 0;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn class_frequencies_track_priors() {
        let cfg = GeneratorConfig {
            train_subjects: 1,
            test_subjects: 0,
            windows_per_subject: 6000,
            modalities: vec![Modality::new("A", 1)],
            class_separation: vec![1.0],
            subject_priors: Some(vec![[0.2, 0.3, 0.5]]),
            ..GeneratorConfig::desk()
        };
        let d = generate(&cfg).unwrap();
        let counts = d.train[0].class_counts();
        let n = 6000.0;
        let chi2: f64 = counts
            .iter()
            .zip([0.2, 0.3, 0.5])
            .map(|(&c, p)| (c as f64 - n * p).powi(2) / (n * p))
            .sum();
        // 99.9% quantile of chi-square with 2 degrees of freedom
        assert!(chi2 < 13.82, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn sampled_priors_sometimes_drop_classes() {
        let cfg = GeneratorConfig {
            train_subjects: 40,
            test_subjects: 0,
            windows_per_subject: 50,
            missing_class_prob: 0.5,
            ..GeneratorConfig::desk()
        };
        let d = generate(&cfg).unwrap();
        let missing = d
            .train
            .iter()
            .filter(|s| s.class_counts().contains(&0))
            .count();
        assert!(missing > 0);
        assert!(d.train.iter().all(|s| s.class_counts().iter().any(|&c| c > 0)));
    }
}
