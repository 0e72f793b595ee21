//! Network architectures: the LSTM sequence classifier, the ensemble built
//! from it, and the Q-network that scores ask / do-not-ask.

pub mod checkpoint;
mod classifier;
mod ensemble;
mod net;
mod qnet;

pub use classifier::{ClassifierConfig, SequenceClassifier, TrainReport};
pub use ensemble::{Ensemble, Member};
pub use net::{batch_steps, BoundNet, RecurrentNet};
pub use qnet::{QNetwork, NUM_ACTIONS};
