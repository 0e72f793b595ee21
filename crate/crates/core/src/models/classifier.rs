use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{batch_steps, BoundNet, RecurrentNet};
use crate::error::{contract, Result};
use crate::numerics::{argmax, clip_global_norm, softmax_unchecked, AdamState, Matrix, Tape, Var};

/// Hyperparameters of the per-modality engagement classifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub num_classes: usize,
    /// Apply a sigmoid to the averaged head output before the softmax.
    pub sigmoid_head: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_grad_norm: Option<f64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            num_classes: 3,
            sigmoid_head: true,
            learning_rate: 0.001,
            batch_size: 8,
            max_grad_norm: None,
        }
    }
}

/// LSTM sequence classifier: unroll over the window, map every hidden state
/// through a shared ReLU dense layer, average over time, then sigmoid and
/// softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceClassifier {
    pub net: RecurrentNet,
    pub sigmoid_head: bool,
}

/// Outcome of [`SequenceClassifier::train_epochs`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// False when the pool was empty or no epochs were requested.
    pub trained: bool,
    pub optimizer_steps: usize,
    /// Mean cross-entropy per epoch, measured on each batch before its update.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

impl SequenceClassifier {
    pub fn new(input_dim: usize, seq_len: usize, cfg: &ClassifierConfig, rng: &mut impl Rng) -> Self {
        Self {
            net: RecurrentNet::new(input_dim, cfg.hidden, cfg.num_classes, seq_len, rng),
            sigmoid_head: cfg.sigmoid_head,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.net.outputs
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim
    }

    pub fn seq_len(&self) -> usize {
        self.net.seq_len
    }

    /// Pre-softmax scores, `n × classes`.
    pub fn logits_on_tape(&self, tape: &mut Tape, bound: &BoundNet, steps: &[Matrix]) -> Var {
        let hs = self.net.unroll(tape, bound, steps);
        let mut acc: Option<Var> = None;
        for h in hs {
            let z = tape.matmul(h, bound.head_w);
            let z = tape.add_row(z, bound.head_b);
            let z = tape.relu(z);
            acc = Some(match acc {
                Some(a) => tape.add(a, z),
                None => z,
            });
        }
        let avg = tape.scale(acc.expect("at least one step"), 1.0 / steps.len() as f64);
        if self.sigmoid_head {
            tape.sigmoid(avg)
        } else {
            avg
        }
    }

    /// Class probabilities for a batch given as per-step matrices.
    pub fn predict_steps(&self, steps: &[Matrix]) -> Result<Vec<Vec<f64>>> {
        let n = self.net.check_inputs(steps)?;
        let mut tape = Tape::new();
        let bound = self.net.bind(&mut tape);
        let logits = self.logits_on_tape(&mut tape, &bound, steps);
        let z = tape.value(logits);
        Ok((0..n).map(|r| softmax_unchecked(z.row(r))).collect())
    }

    /// Class probabilities and argmax for one `seq_len × input_dim` window.
    pub fn predict(&self, x: &Matrix) -> Result<(Vec<f64>, usize)> {
        if x.shape() != (self.seq_len(), self.input_dim()) {
            return contract(format!(
                "classifier expects a {}x{} sequence, got {:?}",
                self.seq_len(),
                self.input_dim(),
                x.shape()
            ));
        }
        let p = self.predict_steps(&batch_steps(&[x])?)?.remove(0);
        let class = argmax(&p);
        Ok((p, class))
    }

    pub fn predict_batch(&self, xs: &[&Matrix]) -> Result<Vec<Vec<f64>>> {
        self.predict_steps(&batch_steps(xs)?)
    }

    /// Mean cross-entropy of a batch and its gradient for every parameter.
    pub fn loss_and_gradients(&self, steps: &[Matrix], labels: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        let n = self.net.check_inputs(steps)?;
        if labels.len() != n || labels.iter().any(|&y| y >= self.num_classes()) {
            return contract("labels must match the batch and lie in the class range");
        }
        let mut tape = Tape::new();
        let bound = self.net.bind(&mut tape);
        let logits = self.logits_on_tape(&mut tape, &bound, steps);
        let loss = tape.softmax_cross_entropy(logits, labels.to_vec());
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).get(0, 0);
        Ok((value, bound.vars().iter().map(|&v| grads.get(v)).collect()))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, steps: &[Matrix], labels: &[usize]) -> Result<f64> {
        self.net.check_inputs(steps)?;
        let mut tape = Tape::new();
        let bound = self.net.bind(&mut tape);
        let logits = self.logits_on_tape(&mut tape, &bound, steps);
        let loss = tape.softmax_cross_entropy(logits, labels.to_vec());
        Ok(tape.value(loss).get(0, 0))
    }

    pub fn optimizer(&self, learning_rate: f64) -> AdamState {
        AdamState::new(
            &self.net.parameters(),
            crate::numerics::AdamConfig::with_learning_rate(learning_rate),
        )
    }

    /// Shuffled mini-batch Adam on cross-entropy. An empty pool or zero
    /// epochs leaves the parameters untouched and reports `trained = false`.
    pub fn train_epochs(
        &mut self,
        adam: &mut AdamState,
        pool: &[(&Matrix, usize)],
        epochs: usize,
        batch_size: usize,
        max_grad_norm: Option<f64>,
        rng: &mut impl Rng,
    ) -> Result<TrainReport> {
        let mut report = TrainReport::default();
        if pool.is_empty() || epochs == 0 {
            return Ok(report);
        }
        let batch_size = batch_size.max(1);
        let mut order: Vec<usize> = (0..pool.len()).collect();
        for _ in 0..epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch_size) {
                let xs: Vec<&Matrix> = chunk.iter().map(|&i| pool[i].0).collect();
                let ys: Vec<usize> = chunk.iter().map(|&i| pool[i].1).collect();
                let (loss, mut grads) = self.loss_and_gradients(&batch_steps(&xs)?, &ys)?;
                if let Some(max) = max_grad_norm {
                    clip_global_norm(&mut grads, max);
                }
                adam.update(&mut self.net.parameters_mut(), &grads)?;
                total += loss * chunk.len() as f64;
                report.optimizer_steps += 1;
            }
            report.epoch_losses.push(total / pool.len() as f64);
        }
        report.trained = true;
        Ok(report)
    }
}
