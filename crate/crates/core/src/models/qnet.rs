use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::{BoundNet, RecurrentNet};
use crate::error::{contract, Result};
use crate::numerics::{softmax_unchecked, Matrix, Tape, Var};

/// Number of policy actions: index 0 is "do not ask", index 1 is "ask".
pub const NUM_ACTIONS: usize = 2;

/// Action-value network. The state is fed as a sequence of `seq_len` rows
/// (one row for classifier-output states, the window's steps for raw
/// feature states); the final hidden state goes through a ReLU and a dense
/// layer giving one score per action. Every call starts from a zero hidden
/// state, so decisions do not leak into each other.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub net: RecurrentNet,
}

impl QNetwork {
    pub fn new(input_dim: usize, seq_len: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            net: RecurrentNet::new(input_dim, hidden, NUM_ACTIONS, seq_len, rng),
        }
    }

    /// Total length of a flattened state.
    pub fn state_len(&self) -> usize {
        self.net.seq_len * self.net.input_dim
    }

    pub fn scores_on_tape(&self, tape: &mut Tape, bound: &BoundNet, steps: &[Matrix]) -> Var {
        let hs = self.net.unroll(tape, bound, steps);
        let last = *hs.last().expect("at least one step");
        let a = tape.relu(last);
        let z = tape.matmul(a, bound.head_w);
        tape.add_row(z, bound.head_b)
    }

    /// Reshape flattened states into per-step batch matrices.
    fn to_steps(&self, states: &[&[f64]]) -> Result<Vec<Matrix>> {
        if states.is_empty() {
            return contract("empty state batch");
        }
        let (t_len, d) = (self.net.seq_len, self.net.input_dim);
        for s in states {
            if s.len() != t_len * d {
                return contract(format!(
                    "state has {} values, Q-network expects {}",
                    s.len(),
                    t_len * d
                ));
            }
        }
        Ok((0..t_len)
            .map(|t| {
                let mut data = Vec::with_capacity(states.len() * d);
                for s in states {
                    data.extend_from_slice(&s[t * d..(t + 1) * d]);
                }
                Matrix::from_vec(states.len(), d, data).expect("shape")
            })
            .collect())
    }

    pub fn forward_batch(&self, states: &[&[f64]]) -> Result<Vec<[f64; NUM_ACTIONS]>> {
        let steps = self.to_steps(states)?;
        self.net.check_inputs(&steps)?;
        let mut tape = Tape::new();
        let bound = self.net.bind(&mut tape);
        let scores = self.scores_on_tape(&mut tape, &bound, &steps);
        let z = tape.value(scores);
        Ok((0..states.len()).map(|r| [z.get(r, 0), z.get(r, 1)]).collect())
    }

    /// Action scores `[Q(s, no-ask), Q(s, ask)]`.
    pub fn forward(&self, state: &[f64]) -> Result<[f64; NUM_ACTIONS]> {
        Ok(self.forward_batch(&[state])?[0])
    }

    /// Softmax of the action scores; argmax agrees with the raw scores.
    pub fn action_probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax_unchecked(&self.forward(state)?))
    }

    /// Mean squared error between `Q(s_i, a_i)` and fixed targets, with
    /// gradients for every parameter.
    pub fn bellman_loss_and_gradients(
        &self,
        states: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Vec<Matrix>)> {
        if actions.len() != states.len() || targets.len() != states.len() {
            return contract("states, actions and targets must have equal length");
        }
        if actions.iter().any(|&a| a >= NUM_ACTIONS) {
            return contract("action index out of range");
        }
        let steps = self.to_steps(states)?;
        self.net.check_inputs(&steps)?;
        let mut tape = Tape::new();
        let bound = self.net.bind(&mut tape);
        let scores = self.scores_on_tape(&mut tape, &bound, &steps);
        let picked = tape.pick(scores, actions.to_vec());
        let target = tape.leaf(Matrix::from_vec(targets.len(), 1, targets.to_vec())?);
        let diff = tape.sub(picked, target);
        let sq = tape.mul(diff, diff);
        let loss = tape.mean(sq);
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).get(0, 0);
        Ok((value, bound.vars().iter().map(|&v| grads.get(v)).collect()))
    }
}
