use mmal::models::{batch_steps, ClassifierConfig, SequenceClassifier};
use mmal::numerics::Matrix;
use mmal::seeding;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn sequence(t: usize, d: usize, mean: f64, rng: &mut impl Rng) -> Matrix {
    let noise = Normal::new(0.0, 0.5).unwrap();
    Matrix::from_vec(t, d, (0..t * d).map(|_| mean + noise.sample(rng)).collect()).unwrap()
}

fn accuracy(clf: &SequenceClassifier, xs: &[Matrix], ys: &[usize]) -> f64 {
    let probs = clf.predict_batch(&xs.iter().collect::<Vec<_>>()).unwrap();
    let hits = probs
        .iter()
        .zip(ys)
        .filter(|(p, &y)| mmal::numerics::argmax(p) == y)
        .count();
    hits as f64 / ys.len() as f64
}

#[test]
fn separable_two_class_task_is_learned() {
    let mut rng = seeding::rng(40);
    let (t, d) = (6, 3);
    let ys: Vec<usize> = (0..64).map(|i| i % 2).collect();
    let xs: Vec<Matrix> = ys
        .iter()
        .map(|&y| sequence(t, d, if y == 0 { -1.0 } else { 1.0 }, &mut rng))
        .collect();
    let cfg = ClassifierConfig {
        hidden: 16,
        num_classes: 2,
        learning_rate: 0.01,
        ..ClassifierConfig::default()
    };
    let mut clf = SequenceClassifier::new(d, t, &cfg, &mut rng);
    let mut adam = clf.optimizer(cfg.learning_rate);
    let pool: Vec<(&Matrix, usize)> = xs.iter().zip(ys.iter().copied()).collect();
    // 64 samples in batches of 8 for 25 epochs: 200 optimizer steps.
    let report = clf.train_epochs(&mut adam, &pool, 25, 8, None, &mut rng).unwrap();
    assert_eq!(report.optimizer_steps, 200);
    let acc = accuracy(&clf, &xs, &ys);
    assert!(acc >= 0.95, "train accuracy {acc}");
}

#[test]
fn one_sample_is_overfit_without_the_sigmoid() {
    let mut rng = seeding::rng(41);
    let cfg = ClassifierConfig {
        hidden: 16,
        sigmoid_head: false,
        learning_rate: 0.05,
        ..ClassifierConfig::default()
    };
    let mut clf = SequenceClassifier::new(4, 5, &cfg, &mut rng);
    let x = sequence(5, 4, 0.3, &mut rng);
    let pool = vec![(&x, 2usize)];
    let mut adam = clf.optimizer(cfg.learning_rate);
    let report = clf.train_epochs(&mut adam, &pool, 50, 1, None, &mut rng).unwrap();
    let losses = &report.epoch_losses;
    let first: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let last: f64 = losses[40..].iter().sum::<f64>() / 10.0;
    assert!(last < first);
    let final_loss = clf.loss(&batch_steps(&[&x]).unwrap(), &[2]).unwrap();
    assert!(final_loss < 0.05, "final loss {final_loss}");
}

#[test]
fn sigmoid_head_bounds_the_top_probability() {
    // The averaged ReLU outputs are non-negative, so the sigmoid lands in
    // [0.5, 1) and the softmax can give at most 1 / (1 + 2 e^(-1/2)).
    let bound = 1.0 / (1.0 + 2.0 * (-0.5f64).exp());
    let mut rng = seeding::rng(42);
    let cfg = ClassifierConfig {
        hidden: 16,
        learning_rate: 0.05,
        ..ClassifierConfig::default()
    };
    let mut clf = SequenceClassifier::new(4, 5, &cfg, &mut rng);
    let x = sequence(5, 4, 0.3, &mut rng);
    let mut adam = clf.optimizer(cfg.learning_rate);
    clf.train_epochs(&mut adam, &[(&x, 1)], 200, 1, None, &mut rng).unwrap();
    let (p, _) = clf.predict(&x).unwrap();
    assert!(p.iter().all(|&v| v <= bound + 1e-12), "p {p:?}");
    let loss = clf.loss(&batch_steps(&[&x]).unwrap(), &[1]).unwrap();
    assert!(loss >= -bound.ln() - 1e-12);
}

#[test]
fn contradictory_labels_converge_to_frequencies() {
    let mut rng = seeding::rng(43);
    let cfg = ClassifierConfig {
        hidden: 8,
        sigmoid_head: false,
        learning_rate: 0.02,
        ..ClassifierConfig::default()
    };
    let mut clf = SequenceClassifier::new(3, 4, &cfg, &mut rng);
    let x = sequence(4, 3, 0.0, &mut rng);
    let labels = [0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
    let pool: Vec<(&Matrix, usize)> = labels.iter().map(|&y| (&x, y)).collect();
    let mut adam = clf.optimizer(cfg.learning_rate);
    clf.train_epochs(&mut adam, &pool, 150, 10, None, &mut rng).unwrap();
    let (p, _) = clf.predict(&x).unwrap();
    assert!((p[0] - 0.7).abs() < 0.03, "p {p:?}");
    assert!((p[1] - 0.3).abs() < 0.03, "p {p:?}");
    assert!(p[2] < 0.02, "p {p:?}");
}

#[test]
fn zero_epochs_leave_parameters_bitwise_unchanged() {
    let mut rng = seeding::rng(44);
    let cfg = ClassifierConfig::default();
    let mut clf = SequenceClassifier::new(3, 4, &cfg, &mut rng);
    let before = clf.clone();
    let x = sequence(4, 3, 0.0, &mut rng);
    let mut adam = clf.optimizer(cfg.learning_rate);
    let report = clf.train_epochs(&mut adam, &[(&x, 0)], 0, 8, None, &mut rng).unwrap();
    assert!(!report.trained);
    assert_eq!(clf, before);
}
