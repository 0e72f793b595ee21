use mmal::personalize::compute_metrics;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

#[test]
fn perfect_predictions() {
    let m = compute_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap();
    assert_eq!((m.accuracy, m.macro_f1), (100.0, 100.0));
}

#[test]
fn two_classes_half_right() {
    let m = compute_metrics(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap();
    assert_eq!(m.confusion, [[1, 1, 0], [1, 1, 0], [0, 0, 0]]);
    assert!(close(m.accuracy, 50.0) && close(m.macro_f1, 50.0));
}

#[test]
fn imbalanced_majority_predictor() {
    let mut labels = vec![0; 90];
    labels.extend([1; 5]);
    labels.extend([2; 5]);
    let m = compute_metrics(&[0; 100], &labels).unwrap();
    assert!(close(m.accuracy, 90.0));
    assert!(close(m.macro_f1, 100.0 * (180.0 / 190.0) / 3.0));
    assert!(m.accuracy > m.macro_f1);
}

#[test]
fn three_class_mixed() {
    let labels = [0, 0, 0, 1, 1, 2, 2, 2, 2];
    let preds = [0, 1, 0, 1, 2, 2, 2, 0, 2];
    let m = compute_metrics(&preds, &labels).unwrap();
    assert_eq!(m.confusion, [[2, 1, 0], [0, 1, 1], [1, 0, 3]]);
    // per-class F1: 4/6, 2/4, 6/8
    assert!(close(m.accuracy, 100.0 * 6.0 / 9.0));
    assert!(close(m.macro_f1, 100.0 * (4.0 / 6.0 + 0.5 + 0.75) / 3.0));
}

#[test]
fn class_only_in_predictions_counts_as_zero() {
    let m = compute_metrics(&[1, 1, 2, 1], &[1, 1, 1, 1]).unwrap();
    assert!(close(m.accuracy, 75.0));
    // class 1: 2*3/(4+3); class 2 predicted once, never true; class 0 absent
    assert!(close(m.macro_f1, 100.0 * (6.0 / 7.0) / 2.0));
    assert_eq!(m.support, 4);
}
