//! Reverse-mode differentiation over matrix-valued operations.
//!
//! A [`Tape`] records every operation of a forward pass together with its
//! output value. [`Tape::backward`] walks the record in reverse and returns
//! the gradient of a scalar node with respect to every node on the tape.
//! Operations work on whole matrices, so one LSTM step is a handful of
//! nodes regardless of batch size or hidden width.

use super::activations::sigmoid_scalar;
use super::matrix::Matrix;
use crate::error::{contract, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// Matrix plus a 1×n row broadcast over all rows.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SliceCols(Var, usize),
    Sum(Var),
    Mean(Var),
    /// Row-wise gather of one column per row.
    Pick(Var, Vec<usize>),
    /// Mean negative log-likelihood of row-wise softmax; keeps the
    /// probabilities for the backward pass.
    SoftmaxCrossEntropy(Var, Vec<usize>, Matrix),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Record an input or parameter.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let bias = self.value(row);
        assert_eq!(bias.rows(), 1, "broadcast operand must be a row");
        assert_eq!(bias.cols(), self.value(a).cols());
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bias.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).scale(k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid_scalar);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice_cols(start, end);
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let out = Matrix::scalar(m.sum() / m.len() as f64);
        self.push(out, Op::Mean(a))
    }

    /// Element `(r, cols[r])` of each row, as an n×1 column.
    pub fn pick(&mut self, a: Var, cols: Vec<usize>) -> Var {
        let m = self.value(a);
        assert_eq!(m.rows(), cols.len());
        let picked: Vec<f64> = cols.iter().enumerate().map(|(r, &c)| m.get(r, c)).collect();
        let out = Matrix::from_vec(picked.len(), 1, picked).expect("column shape");
        self.push(out, Op::Pick(a, cols))
    }

    /// Mean over rows of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Vec<usize>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows(), labels.len());
        let mut probs = Matrix::zeros(z.rows(), z.cols());
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = z.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_norm = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += log_norm - row[label];
            for (p, v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - log_norm).exp();
            }
        }
        let out = Matrix::scalar(total / labels.len() as f64);
        self.push(out, Op::SoftmaxCrossEntropy(logits, labels, probs))
    }

    /// Gradient of the scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let Some(node) = self.nodes.get(loss.0) else {
            return contract("backward called on a node that was never recorded");
        };
        if node.value.shape() != (1, 1) {
            return contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.value.shape()
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        // weights appear in many products; transpose each once
        let mut transposed: Vec<Option<Matrix>> = vec![None; loss.0 + 1];

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let bt = transposed[b.0].get_or_insert_with(|| self.value(*b).transpose());
                    accumulate(&mut grads, *a, g.matmul(bt));
                    let shape = self.value(*b).shape();
                    self.value(*a).matmul_tn_into(&g, slot(&mut grads, *b, shape));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    let db = slot(&mut grads, *row, (1, g.cols()));
                    for r in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.scale(*k)),
                Op::Sigmoid(a) => {
                    let d = g.zip_map(&node.value, |x, s| x * s * (1.0 - s));
                    accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let d = g.zip_map(&node.value, |x, t| x * (1.0 - t * t));
                    accumulate(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let d = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 });
                    accumulate(&mut grads, *a, d);
                }
                Op::SliceCols(a, start) => {
                    let d = slot(&mut grads, *a, self.value(*a).shape());
                    for r in 0..g.rows() {
                        for (o, v) in d.row_mut(r)[*start..*start + g.cols()].iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let k = g.get(0, 0) / (r * c) as f64;
                    accumulate(&mut grads, *a, Matrix::filled(r, c, k));
                }
                Op::Pick(a, cols) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for (row, &col) in cols.iter().enumerate() {
                        d.set(row, col, g.get(row, 0));
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::SoftmaxCrossEntropy(a, labels, probs) => {
                    let k = g.get(0, 0) / labels.len() as f64;
                    let mut d = probs.clone();
                    for (r, &label) in labels.iter().enumerate() {
                        let row = d.row_mut(r);
                        row[label] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= k;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes[..=loss.0].iter().map(|n| n.value.shape()).collect(),
        })
    }
}

/// The gradient slot of `v`, zero-initialized on first use.
fn slot(grads: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; an all-zero matrix if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Matrix {
        match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            Some(None) => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
            // recorded after the loss, so the loss cannot depend on it
            None => Matrix::zeros(0, 0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_parameters_has_unit_gradient() {
        let mut tape = Tape::new();
        let p = tape.leaf(Matrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, 7.0]).unwrap());
        let loss = tape.sum(p);
        let g = tape.backward(loss).unwrap().get(p);
        assert!(g.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn unused_parameter_gets_exact_zero() {
        let mut tape = Tape::new();
        let used = tape.leaf(Matrix::row_vector(&[1.0, 2.0]));
        let unused = tape.leaf(Matrix::row_vector(&[3.0, 4.0]));
        let sq = tape.mul(used, used);
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(unused).data(), &[0.0, 0.0]);
        assert_eq!(grads.get(used).data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_without_forward_is_error() {
        let tape = Tape::new();
        assert!(matches!(tape.backward(Var(0)), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn backward_of_non_scalar_is_error() {
        let mut tape = Tape::new();
        let p = tape.leaf(Matrix::row_vector(&[1.0, 2.0]));
        assert!(tape.backward(p).is_err());
    }

    #[test]
    fn cross_entropy_matches_direct_evaluation() {
        let mut tape = Tape::new();
        let z = tape.leaf(Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0]).unwrap());
        let loss = tape.softmax_cross_entropy(z, vec![2, 0]);
        let p = crate::numerics::softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = (-p[2].ln() + 3f64.ln()) / 2.0;
        assert!((tape.value(loss).get(0, 0) - expected).abs() < 1e-14);
    }
}
