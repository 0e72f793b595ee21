//! Multi-modal active learning driven by a deep Q-learning query policy.
//!
//! A stream of multi-modal windows is scored by an ensemble of per-modality
//! LSTM classifiers whose predictions are fused by majority vote. A Q-network
//! looks at the classifiers' outputs and decides, window by window, whether
//! to pay for a label. Labels acquired under a budget train the ensemble,
//! and the learned policy later picks the windows used to personalize the
//! ensemble to a new subject.
//!
//! Module map:
//!
//! - [`numerics`]: matrices, reverse-mode tape, LSTM cell, Adam
//! - [`models`]: sequence classifier, Q-network, checkpoints
//! - [`fusion`]: majority vote, confidence, feature concatenation
//! - [`policy`]: states, rewards, replay memory, Q-learning, baselines
//! - [`trainer`]: the joint episodic training loop
//! - [`personalize`]: per-subject adaptation and metrics
//! - [`datagen`]: schema, synthetic generator, normalization, file formats
//! - [`harness`]: experiment grids, configuration and reports

pub mod datagen;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod models;
pub mod numerics;
pub mod personalize;
pub mod policy;
pub mod seeding;
pub mod trainer;

pub use error::{Error, Result};
