//! Dense matrix math, reverse-mode gradients and the Adam optimizer.

mod activations;
mod adam;
mod lstm;
mod matrix;
mod tape;

pub use activations::{entropy, sigmoid, sigmoid_scalar, softmax};
pub(crate) use activations::softmax_unchecked;
pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use lstm::{lstm_step, lstm_step_on_tape, LstmParams, LstmVars};
pub use matrix::{argmax, Matrix};
pub use tape::{Gradients, Tape, Var};
