use rand::Rng;
use serde::{Deserialize, Serialize};

use super::classifier::{ClassifierConfig, SequenceClassifier, TrainReport};
use crate::datagen::{MultiModalWindow, Schema};
use crate::error::{contract, Result};
use crate::fusion::{confidence, feature_concat, majority_vote, EnsembleOutput, FusionMode};
use crate::numerics::{argmax, AdamState, Matrix};

/// One classifier of an ensemble and the modalities it reads. A member
/// reading several modalities sees their per-step concatenation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub name: String,
    pub modalities: Vec<usize>,
    pub classifier: SequenceClassifier,
    #[serde(skip)]
    optimizer: Option<AdamState>,
}

impl Member {
    pub fn new(name: String, modalities: Vec<usize>, classifier: SequenceClassifier) -> Self {
        Self {
            name,
            modalities,
            classifier,
            optimizer: None,
        }
    }

    pub fn input(&self, window: &MultiModalWindow) -> Result<Matrix> {
        feature_concat(window, &self.modalities)
    }
}

/// Classifiers fused by majority vote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub fusion: FusionMode,
    pub members: Vec<Member>,
    pub config: ClassifierConfig,
}

impl Ensemble {
    /// Fresh ensemble for `fusion` over `schema`: one member per modality for
    /// model-level fusion, a single member on the concatenated features for
    /// feature-level fusion, or a single member on one modality.
    pub fn new(schema: &Schema, fusion: FusionMode, config: &ClassifierConfig, rng: &mut impl Rng) -> Result<Self> {
        let groups: Vec<(String, Vec<usize>)> = match fusion {
            FusionMode::ModelLevel => schema
                .modalities
                .iter()
                .enumerate()
                .map(|(i, m)| (m.name.clone(), vec![i]))
                .collect(),
            FusionMode::FeatureLevel => vec![("FEATURE-F".into(), (0..schema.modalities.len()).collect())],
            FusionMode::SingleModality(i) => {
                let Some(m) = schema.modalities.get(i) else {
                    return contract(format!("modality {i} not in schema"));
                };
                vec![(m.name.clone(), vec![i])]
            }
        };
        let members = groups
            .into_iter()
            .map(|(name, mods)| {
                let dim = mods.iter().map(|&i| schema.modalities[i].dim).sum();
                let clf = SequenceClassifier::new(dim, schema.seq_len, config, rng);
                Member::new(name, mods, clf)
            })
            .collect();
        Ok(Self {
            fusion,
            members,
            config: config.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Modalities read by any member, ascending.
    pub fn modalities(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.members.iter().flat_map(|m| m.modalities.iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn num_classes(&self) -> usize {
        self.members.first().map_or(0, |m| m.classifier.num_classes())
    }

    pub fn outputs_batch(&self, windows: &[&MultiModalWindow]) -> Result<Vec<EnsembleOutput>> {
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let mut per_member = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let xs = windows.iter().map(|w| m.input(w)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Matrix> = xs.iter().collect();
            per_member.push(m.classifier.predict_batch(&refs)?);
        }
        Ok((0..windows.len())
            .map(|i| {
                let probs: Vec<Vec<f64>> = per_member.iter().map(|p| p[i].clone()).collect();
                EnsembleOutput {
                    classes: probs.iter().map(|p| argmax(p)).collect(),
                    confidences: probs.iter().map(|p| confidence(p)).collect(),
                    probs,
                }
            })
            .collect())
    }

    pub fn outputs(&self, window: &MultiModalWindow) -> Result<EnsembleOutput> {
        Ok(self.outputs_batch(&[window])?.remove(0))
    }

    /// Fused class for each window.
    pub fn predict_batch(&self, windows: &[&MultiModalWindow]) -> Result<Vec<usize>> {
        Ok(self.outputs_batch(windows)?.iter().map(majority_vote).collect())
    }

    /// Train every member on the labelled pool for `epochs`. Optimizer state
    /// persists across calls.
    pub fn train(
        &mut self,
        labeled: &[(&MultiModalWindow, usize)],
        epochs: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<TrainReport>> {
        let cfg = self.config.clone();
        let mut reports = Vec::with_capacity(self.members.len());
        for m in &mut self.members {
            let inputs = labeled
                .iter()
                .map(|(w, _)| m.input(w))
                .collect::<Result<Vec<_>>>()?;
            let pool: Vec<(&Matrix, usize)> = inputs.iter().zip(labeled).map(|(x, (_, y))| (x, *y)).collect();
            let clf = &mut m.classifier;
            let adam = m.optimizer.get_or_insert_with(|| clf.optimizer(cfg.learning_rate));
            reports.push(clf.train_epochs(adam, &pool, epochs, cfg.batch_size, cfg.max_grad_norm, rng)?);
        }
        Ok(reports)
    }

    /// Forget optimizer moments, e.g. before adapting to a new subject.
    pub fn reset_optimizers(&mut self) {
        for m in &mut self.members {
            m.optimizer = None;
        }
    }
}
