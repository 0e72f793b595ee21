use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::numerics::{lstm_step_on_tape, LstmParams, LstmVars, Matrix, Tape, Var};

/// An LSTM cell unrolled over `seq_len` steps plus a dense `hidden × outputs`
/// head. Both network types in this crate are built from it; they differ in
/// how the head is applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentNet {
    pub input_dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub seq_len: usize,
    pub lstm: LstmParams,
    pub head_w: Matrix,
    pub head_b: Matrix,
}

/// Tape handles for every parameter, in [`RecurrentNet::parameters`] order.
#[derive(Clone, Copy, Debug)]
pub struct BoundNet {
    pub lstm: LstmVars,
    pub head_w: Var,
    pub head_b: Var,
}

impl BoundNet {
    pub fn vars(&self) -> [Var; 5] {
        [self.lstm.w_x, self.lstm.w_h, self.lstm.b, self.head_w, self.head_b]
    }
}

fn uniform_fill(m: &mut Matrix, rng: &mut impl Rng) {
    let bound = 1.0 / (m.rows() as f64).sqrt();
    for v in m.data_mut() {
        *v = rng.gen_range(-bound..=bound);
    }
}

impl RecurrentNet {
    /// Weights uniform in ±1/√fan-in, biases zero.
    pub fn new(input_dim: usize, hidden: usize, outputs: usize, seq_len: usize, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(input_dim, hidden, outputs, seq_len);
        uniform_fill(&mut net.lstm.w_x, rng);
        uniform_fill(&mut net.lstm.w_h, rng);
        uniform_fill(&mut net.head_w, rng);
        net
    }

    pub fn zeros(input_dim: usize, hidden: usize, outputs: usize, seq_len: usize) -> Self {
        Self {
            input_dim,
            hidden,
            outputs,
            seq_len,
            lstm: LstmParams::zeros(input_dim, hidden),
            head_w: Matrix::zeros(hidden, outputs),
            head_b: Matrix::zeros(1, outputs),
        }
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        vec![&self.lstm.w_x, &self.lstm.w_h, &self.lstm.b, &self.head_w, &self.head_b]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.lstm.w_x,
            &mut self.lstm.w_h,
            &mut self.lstm.b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm.validate()?;
        if self.lstm.input_dim() != self.input_dim
            || self.lstm.hidden() != self.hidden
            || self.head_w.shape() != (self.hidden, self.outputs)
            || self.head_b.shape() != (1, self.outputs)
            || self.seq_len == 0
        {
            return contract("network parameter shapes do not match its architecture");
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundNet {
        BoundNet {
            lstm: LstmVars {
                w_x: tape.leaf(self.lstm.w_x.clone()),
                w_h: tape.leaf(self.lstm.w_h.clone()),
                b: tape.leaf(self.lstm.b.clone()),
                hidden: self.hidden,
            },
            head_w: tape.leaf(self.head_w.clone()),
            head_b: tape.leaf(self.head_b.clone()),
        }
    }

    /// Check a batch of step inputs: `seq_len` matrices, each `n × input_dim`
    /// with the same `n ≥ 1`.
    pub fn check_inputs(&self, steps: &[Matrix]) -> Result<usize> {
        if steps.len() != self.seq_len {
            return contract(format!("expected {} steps, got {}", self.seq_len, steps.len()));
        }
        let n = steps[0].rows();
        if n == 0 {
            return contract("empty batch");
        }
        for x in steps {
            if x.shape() != (n, self.input_dim) {
                return contract(format!(
                    "step input has shape {:?}, expected ({n}, {})",
                    x.shape(),
                    self.input_dim
                ));
            }
            if !x.is_finite() {
                return contract("non-finite input");
            }
        }
        Ok(n)
    }

    /// Hidden states for every step, starting from zero state.
    pub fn unroll(&self, tape: &mut Tape, bound: &BoundNet, steps: &[Matrix]) -> Vec<Var> {
        let n = steps[0].rows();
        let mut h = tape.leaf(Matrix::zeros(n, self.hidden));
        let mut c = tape.leaf(Matrix::zeros(n, self.hidden));
        let mut hs = Vec::with_capacity(steps.len());
        for x in steps {
            let x = tape.leaf(x.clone());
            let (h_t, c_t) = lstm_step_on_tape(tape, bound.lstm, x, h, c);
            h = h_t;
            c = c_t;
            hs.push(h);
        }
        hs
    }
}

/// Turn `n` sequences (each `seq_len × dim`) into `seq_len` batch matrices
/// (each `n × dim`).
pub fn batch_steps(sequences: &[&Matrix]) -> Result<Vec<Matrix>> {
    let Some(first) = sequences.first() else {
        return contract("empty batch");
    };
    let (steps, dim) = first.shape();
    if sequences.iter().any(|s| s.shape() != (steps, dim)) {
        return contract("sequences in a batch must share a shape");
    }
    Ok((0..steps)
        .map(|t| {
            let mut data = Vec::with_capacity(sequences.len() * dim);
            for s in sequences {
                data.extend_from_slice(s.row(t));
            }
            Matrix::from_vec(sequences.len(), dim, data).expect("shape")
        })
        .collect())
}
