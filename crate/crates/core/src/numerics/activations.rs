use crate::error::{contract, Result};

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

/// Numerically stable softmax. Errors on empty input.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return contract("softmax of an empty vector");
    }
    Ok(softmax_unchecked(z))
}

pub(crate) fn softmax_unchecked(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Shannon entropy in nats; `0 · ln 0` counts as zero.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        assert!((sigmoid_scalar(50.0) - 1.0).abs() < 1e-12);
        // 1 / (1 + e)
        assert!((sigmoid_scalar(-1.0) - 0.268_941_421_369_995_1).abs() < 1e-15);
    }

    #[test]
    fn softmax_values() {
        let u = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in u {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = [0.090_030_573_170_380_46, 0.244_728_471_054_797_6, 0.665_240_955_774_821_8];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_empty_is_error() {
        assert!(softmax(&[]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_is_distribution(z in proptest::collection::vec(-50.0f64..50.0, 1..8)) {
            let p = softmax(&z).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn softmax_shift_invariant(c in -20.0f64..20.0, k in -5.0f64..5.0) {
            let a = softmax(&[c, c + k, c + 2.0 * k]).unwrap();
            let b = softmax(&[0.0, k, 2.0 * k]).unwrap();
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn sigmoid_in_open_unit_interval(x in -30.0f64..30.0) {
            let s = sigmoid_scalar(x);
            prop_assert!(s > 0.0 && s < 1.0);
        }
    }
}
