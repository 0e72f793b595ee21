//! Dataset schema, synthetic sessions, normalization and on-disk formats.

mod generator;
mod io;
mod normalize;

pub use generator::{generate, GeneratorConfig};
pub use io::{
    load_dataset, read_subject, read_subject_jsonl, save_dataset, write_subject, write_subject_jsonl,
    DatasetFormat,
};
pub use normalize::{zscore_fit_apply, Normalizer, STD_FLOOR};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::numerics::Matrix;

/// Number of engagement levels (low, medium, high).
pub const NUM_CLASSES: usize = 3;

pub type SubjectId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modality {
    pub name: String,
    pub dim: usize,
}

impl Modality {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            name: name.to_string(),
            dim,
        }
    }
}

/// Shape shared by every window of a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub seq_len: usize,
    pub modalities: Vec<Modality>,
    pub labels: Vec<String>,
}

impl Schema {
    pub fn new(seq_len: usize, modalities: Vec<Modality>) -> Self {
        Self {
            seq_len,
            modalities,
            labels: ["low", "medium", "high"].map(String::from).to_vec(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.modalities.iter().map(|m| m.dim).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 {
            return contract("sequence length must be positive");
        }
        if self.modalities.is_empty() || self.modalities.iter().any(|m| m.dim == 0) {
            return contract("every modality needs a positive dimension");
        }
        if self.labels.len() != NUM_CLASSES {
            return contract(format!("label map must have {NUM_CLASSES} entries"));
        }
        Ok(())
    }
}

/// One labelled (or unlabelled) second of multi-modal recording: a
/// `seq_len × dim` matrix per modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiModalWindow {
    pub subject: SubjectId,
    pub index: usize,
    pub label: Option<usize>,
    pub features: Vec<Matrix>,
}

impl MultiModalWindow {
    pub fn seq_len(&self) -> usize {
        self.features.first().map_or(0, Matrix::rows)
    }

    /// Checks the window against a schema: matching modality count and
    /// dims, a common step count, and a label inside the class range.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.features.len() != schema.modalities.len() {
            return contract(format!(
                "window {} has {} modalities, schema has {}",
                self.index,
                self.features.len(),
                schema.modalities.len()
            ));
        }
        for (x, m) in self.features.iter().zip(&schema.modalities) {
            if x.shape() != (schema.seq_len, m.dim) {
                return contract(format!(
                    "window {} modality {} has shape {:?}, expected {:?}",
                    self.index,
                    m.name,
                    x.shape(),
                    (schema.seq_len, m.dim)
                ));
            }
        }
        if let Some(y) = self.label {
            if y >= NUM_CLASSES {
                return contract(format!("label {y} outside 0..{NUM_CLASSES}"));
            }
        }
        Ok(())
    }
}

/// All windows of one subject's recording, in recording order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSession {
    pub subject: SubjectId,
    pub windows: Vec<MultiModalWindow>,
}

impl SubjectSession {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for y in self.windows.iter().filter_map(|w| w.label) {
            counts[y] += 1;
        }
        counts
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        for pair in self.windows.windows(2) {
            if pair[1].index <= pair[0].index {
                return contract(format!("subject {} window indices not increasing", self.subject));
            }
        }
        for w in &self.windows {
            if w.subject != self.subject {
                return contract(format!("window {} belongs to subject {}", w.index, w.subject));
            }
            w.validate(schema)?;
        }
        Ok(())
    }
}

/// Training and held-out subjects sharing one schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Schema,
    pub train: Vec<SubjectSession>,
    pub test: Vec<SubjectSession>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        for s in self.train.iter().chain(&self.test) {
            s.validate(&self.schema)?;
        }
        Ok(())
    }

    /// Z-score every feature with statistics from the training subjects.
    pub fn normalized(&self) -> Result<(Dataset, Normalizer)> {
        let mut out = self.clone();
        let normalizer = Normalizer::fit(&self.train)?;
        for s in out.train.iter_mut().chain(out.test.iter_mut()) {
            normalizer.apply(s)?;
        }
        Ok((out, normalizer))
    }
}

/// Bin a continuous engagement annotation in `[-1, 1]` into low (≤ 0.5),
/// medium (≤ 0.8) or high.
pub fn discretize_engagement(score: f64) -> Result<usize> {
    if !(-1.0..=1.0).contains(&score) {
        return contract(format!("engagement score {score} outside [-1, 1]"));
    }
    Ok(if score <= 0.5 {
        0
    } else if score <= 0.8 {
        1
    } else {
        2
    })
}
