//! Compare analytic gradients of a small classifier and Q-network against
//! central finite differences.

use mmal::models::{batch_steps, ClassifierConfig, QNetwork, SequenceClassifier};
use mmal::numerics::Matrix;
use mmal::seeding;
use rand::Rng;

const STEP: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn main() -> anyhow::Result<()> {
    let mut rng = seeding::rng(5);
    let cfg = ClassifierConfig {
        hidden: 4,
        ..ClassifierConfig::default()
    };
    let clf = SequenceClassifier::new(3, 4, &cfg, &mut rng);
    let xs: Vec<Matrix> = (0..2).map(|_| random_matrix(4, 3, &mut rng)).collect();
    let steps = batch_steps(&xs.iter().collect::<Vec<_>>())?;
    let labels = [0, 2];
    let (_, grads) = clf.loss_and_gradients(&steps, &labels)?;

    let mut worst: f64 = 0.0;
    for (pi, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let mut plus = clf.clone();
            plus.net.parameters_mut()[pi].data_mut()[k] += STEP;
            let mut minus = clf.clone();
            minus.net.parameters_mut()[pi].data_mut()[k] -= STEP;
            let numeric = (plus.loss(&steps, &labels)? - minus.loss(&steps, &labels)?) / (2.0 * STEP);
            worst = worst.max(rel_err(g.data()[k], numeric));
        }
    }
    println!("classifier: {} parameters, max relative error {worst:.2e}", clf.net.parameter_count());

    let q = QNetwork::new(16, 1, 5, &mut rng);
    let states: Vec<Vec<f64>> = (0..3).map(|_| (0..16).map(|_| rng.gen::<f64>()).collect()).collect();
    let refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
    let (actions, targets) = ([0, 1, 1], [0.5, -1.0, 1.0]);
    let (_, grads) = q.bellman_loss_and_gradients(&refs, &actions, &targets)?;
    let mut worst: f64 = 0.0;
    for (pi, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let mut plus = q.clone();
            plus.net.parameters_mut()[pi].data_mut()[k] += STEP;
            let mut minus = q.clone();
            minus.net.parameters_mut()[pi].data_mut()[k] -= STEP;
            let lp = plus.bellman_loss_and_gradients(&refs, &actions, &targets)?.0;
            let lm = minus.bellman_loss_and_gradients(&refs, &actions, &targets)?.0;
            worst = worst.max(rel_err(g.data()[k], (lp - lm) / (2.0 * STEP)));
        }
    }
    println!("q-network: {} parameters, max relative error {worst:.2e}", q.net.parameter_count());
    Ok(())
}
