//! Combining per-modality classifier outputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datagen::{MultiModalWindow, Schema};
use crate::error::{contract, Error, Result};
use crate::numerics::{entropy, Matrix};

/// How modalities are combined into one engagement estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// One classifier per modality, majority vote over their predictions.
    ModelLevel,
    /// One classifier on the concatenated features of every modality.
    FeatureLevel,
    /// One classifier on a single modality.
    SingleModality(usize),
}

impl FusionMode {
    /// Human-readable column name, e.g. `MODEL-F` or the modality name.
    pub fn label(&self, schema: &Schema) -> String {
        match self {
            FusionMode::ModelLevel => "MODEL-F".into(),
            FusionMode::FeatureLevel => "FEATURE-F".into(),
            FusionMode::SingleModality(i) => schema
                .modalities
                .get(*i)
                .map_or_else(|| format!("modality-{i}"), |m| m.name.clone()),
        }
    }

    /// Parse `model-f`, `feature-f`, `modality-<index>` or a modality name.
    pub fn parse(s: &str, schema: &Schema) -> Result<Self> {
        if let Ok(mode) = s.parse::<FusionMode>() {
            return Ok(mode);
        }
        schema
            .modalities
            .iter()
            .position(|m| m.name.eq_ignore_ascii_case(s))
            .map(FusionMode::SingleModality)
            .ok_or_else(|| Error::Config(format!("unknown fusion mode {s:?}")))
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionMode::ModelLevel => f.write_str("model-f"),
            FusionMode::FeatureLevel => f.write_str("feature-f"),
            FusionMode::SingleModality(i) => write!(f, "modality-{i}"),
        }
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "model-f" | "model" => Ok(FusionMode::ModelLevel),
            "feature-f" | "feature" => Ok(FusionMode::FeatureLevel),
            other => other
                .strip_prefix("modality-")
                .and_then(|i| i.parse().ok())
                .map(FusionMode::SingleModality)
                .ok_or_else(|| Error::Config(format!("unknown fusion mode {s:?}"))),
        }
    }
}

impl Serialize for FusionMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FusionMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-member outputs for one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutput {
    pub probs: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
    pub confidences: Vec<f64>,
}

/// One minus the entropy of `p` divided by its maximum `ln K`, clamped to
/// `[0, 1]`. Uniform maps to 0, one-hot to 1.
pub fn confidence(p: &[f64]) -> f64 {
    if p.len() < 2 {
        return 1.0;
    }
    let max = (p.len() as f64).ln();
    (1.0 - entropy(p) / max).clamp(0.0, 1.0)
}

/// Class with the most votes. When several classes share the top count,
/// the most confident member voting for one of them decides; equal
/// confidences fall back to the lower class index.
pub fn majority_vote(out: &EnsembleOutput) -> usize {
    let k = out.probs.first().map_or(0, Vec::len).max(out.classes.iter().max().map_or(0, |&c| c + 1));
    let mut votes = vec![0usize; k.max(1)];
    for &c in &out.classes {
        votes[c] += 1;
    }
    let top = votes.iter().copied().max().unwrap_or(0);
    let tied: Vec<usize> = (0..votes.len()).filter(|&c| votes[c] == top).collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let mut best: Option<(f64, usize)> = None;
    for (&c, &conf) in out.classes.iter().zip(&out.confidences) {
        if !tied.contains(&c) {
            continue;
        }
        best = match best {
            Some((bc, bclass)) if bc > conf || (bc == conf && bclass <= c) => Some((bc, bclass)),
            _ => Some((conf, c)),
        };
    }
    best.map_or(tied[0], |(_, c)| c)
}

/// Per-step concatenation of the listed modalities, in the order given.
pub fn feature_concat(window: &MultiModalWindow, modalities: &[usize]) -> Result<Matrix> {
    if modalities.is_empty() {
        return contract("feature_concat needs at least one modality");
    }
    let mut parts = Vec::with_capacity(modalities.len());
    for &m in modalities {
        let Some(x) = window.features.get(m) else {
            return contract(format!("window {} has no modality {m}", window.index));
        };
        parts.push(x);
    }
    if parts.len() == 1 {
        return Ok(parts[0].clone());
    }
    if parts.iter().any(|p| p.rows() != parts[0].rows()) {
        return contract("modalities disagree on the number of steps");
    }
    Matrix::hstack(&parts)
}

/// Concatenation of every modality of the window.
pub fn feature_concat_all(window: &MultiModalWindow) -> Result<Matrix> {
    let all: Vec<usize> = (0..window.features.len()).collect();
    feature_concat(window, &all)
}
