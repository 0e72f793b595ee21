//! Versioned JSON checkpoints. Floats are written in shortest round-trip
//! form and parsed exactly, so save/load is bit-exact for finite values.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Ensemble, QNetwork, SequenceClassifier};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "mmal-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Models that can be stored in a checkpoint.
pub trait Checkpointable: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn check(&self) -> Result<()>;
}

impl Checkpointable for SequenceClassifier {
    const KIND: &'static str = "sequence-classifier";

    fn check(&self) -> Result<()> {
        self.net.validate()
    }
}

impl Checkpointable for QNetwork {
    const KIND: &'static str = "q-network";

    fn check(&self) -> Result<()> {
        self.net.validate()
    }
}

impl Checkpointable for Ensemble {
    const KIND: &'static str = "ensemble";

    fn check(&self) -> Result<()> {
        self.members.iter().try_for_each(|m| m.classifier.net.validate())
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    model: T,
}

pub fn to_json<T: Checkpointable>(model: &T) -> Result<String> {
    let env = Envelope {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind: T::KIND.into(),
        model,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn from_json<T: Checkpointable>(text: &str) -> Result<T> {
    let env: Envelope<serde_json::Value> = serde_json::from_str(text)?;
    let bad = |detail: String| Error::Format {
        what: "checkpoint",
        detail,
    };
    if env.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unknown format {:?}", env.format)));
    }
    if env.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", env.version)));
    }
    if env.kind != T::KIND {
        return Err(bad(format!("expected a {} checkpoint, found {}", T::KIND, env.kind)));
    }
    let model: T = serde_json::from_value(env.model)?;
    model.check()?;
    Ok(model)
}

pub fn save<T: Checkpointable>(path: &Path, model: &T) -> Result<()> {
    fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load<T: Checkpointable>(path: &Path) -> Result<T> {
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ClassifierConfig;
    use crate::seeding;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = seeding::rng(21);
        let clf = SequenceClassifier::new(5, 4, &ClassifierConfig::default(), &mut rng);
        let back: SequenceClassifier = from_json(&to_json(&clf).unwrap()).unwrap();
        for (a, b) in clf.net.parameters().iter().zip(back.net.parameters()) {
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        let q = QNetwork::new(16, 1, 32, &mut rng);
        assert_eq!(from_json::<QNetwork>(&to_json(&q).unwrap()).unwrap(), q);
    }

    #[test]
    fn wrong_kind_rejected() {
        let mut rng = seeding::rng(22);
        let q = QNetwork::new(3, 1, 2, &mut rng);
        assert!(from_json::<SequenceClassifier>(&to_json(&q).unwrap()).is_err());
    }
}
