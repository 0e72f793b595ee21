use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::{contract, Result};

/// Weights of one LSTM cell.
///
/// The joint affine map `x·w_x + h·w_h + b` produces `4·hidden` columns laid
/// out as `[forget | input | output | candidate]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Matrix,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_x: Matrix::zeros(input_dim, 4 * hidden),
            w_h: Matrix::zeros(hidden, 4 * hidden),
            b: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_h.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.w_x.cols() != 4 * h || self.w_h.cols() != 4 * h || self.b.shape() != (1, 4 * h) {
            return contract("LSTM parameter shapes are inconsistent");
        }
        Ok(())
    }
}

/// Tape handles for an [`LstmParams`].
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
    pub hidden: usize,
}

/// One recorded LSTM step over a batch; returns `(h_t, c_t)`.
pub fn lstm_step_on_tape(tape: &mut Tape, p: LstmVars, x: Var, h_prev: Var, c_prev: Var) -> (Var, Var) {
    let h = p.hidden;
    let xw = tape.matmul(x, p.w_x);
    let hw = tape.matmul(h_prev, p.w_h);
    let pre = tape.add(xw, hw);
    let pre = tape.add_row(pre, p.b);

    let f = tape.slice_cols(pre, 0, h);
    let i = tape.slice_cols(pre, h, 2 * h);
    let o = tape.slice_cols(pre, 2 * h, 3 * h);
    let cand = tape.slice_cols(pre, 3 * h, 4 * h);

    let forget = tape.sigmoid(f);
    let input = tape.sigmoid(i);
    let output = tape.sigmoid(o);
    let cand = tape.tanh(cand);

    let kept = tape.mul(forget, c_prev);
    let written = tape.mul(input, cand);
    let c = tape.add(kept, written);
    let squashed = tape.tanh(c);
    let h_t = tape.mul(output, squashed);
    (h_t, c)
}

/// Single-sample LSTM step on plain vectors.
pub fn lstm_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], params: &LstmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let hidden = params.hidden();
    if x.len() != params.input_dim() || h_prev.len() != hidden || c_prev.len() != hidden {
        return contract(format!(
            "lstm_step expects x:{} h:{hidden} c:{hidden}, got x:{} h:{} c:{}",
            params.input_dim(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        ));
    }
    let mut tape = Tape::new();
    let vars = LstmVars {
        w_x: tape.leaf(params.w_x.clone()),
        w_h: tape.leaf(params.w_h.clone()),
        b: tape.leaf(params.b.clone()),
        hidden,
    };
    let x = tape.leaf(Matrix::row_vector(x));
    let h = tape.leaf(Matrix::row_vector(h_prev));
    let c = tape.leaf(Matrix::row_vector(c_prev));
    let (h_t, c_t) = lstm_step_on_tape(&mut tape, vars, x, h, c);
    Ok((tape.value(h_t).data().to_vec(), tape.value(c_t).data().to_vec()))
}
