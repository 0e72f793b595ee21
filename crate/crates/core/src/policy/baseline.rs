use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::EnsembleOutput;
use crate::numerics::entropy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineStrategy {
    /// Ask with a fixed probability.
    Rnd,
    /// Ask when the summed member entropy is in the top of the stream so far.
    Unc,
}

/// Sum of the members' entropies in nats.
pub fn uncertainty_score(out: &EnsembleOutput) -> f64 {
    out.probs.iter().map(|p| entropy(p)).sum()
}

/// Asks with probability `p_ask`, normally `budget / stream length`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomSelector {
    pub p_ask: f64,
}

impl RandomSelector {
    pub fn for_budget(budget: usize, stream_len: usize) -> Self {
        let p_ask = if stream_len == 0 {
            0.0
        } else {
            (budget as f64 / stream_len as f64).min(1.0)
        };
        Self { p_ask }
    }

    pub fn decide(&self, rng: &mut impl Rng) -> bool {
        self.p_ask >= 1.0 || rng.gen::<f64>() < self.p_ask
    }
}

/// Uncertainty sampling paced to spend the budget over the stream.
///
/// With `b` labels left and `n` windows left (current one included), the
/// selector asks when the score reaches the `1 - b/n` quantile of all scores
/// seen so far in this stream. A score of zero never asks.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintySelector {
    budget: usize,
    stream_len: usize,
    seen: usize,
    asked: usize,
    history: Vec<f64>,
}

impl UncertaintySelector {
    pub fn new(budget: usize, stream_len: usize) -> Self {
        Self {
            budget,
            stream_len,
            seen: 0,
            asked: 0,
            history: Vec::new(),
        }
    }

    pub fn asked(&self) -> usize {
        self.asked
    }

    /// Current threshold for a fraction `f` of remaining asks.
    fn threshold(&self, ask_fraction: f64) -> f64 {
        let n = self.history.len();
        let q = (1.0 - ask_fraction).clamp(0.0, 1.0);
        let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.history[rank - 1]
    }

    pub fn decide(&mut self, score: f64) -> bool {
        let pos = self.history.partition_point(|&v| v < score);
        self.history.insert(pos, score);
        self.seen += 1;
        let budget_left = self.budget.saturating_sub(self.asked);
        if budget_left == 0 || score <= 0.0 {
            return false;
        }
        let remaining = self.stream_len.saturating_sub(self.seen) + 1;
        let fraction = budget_left as f64 / remaining as f64;
        let ask = fraction >= 1.0 || score >= self.threshold(fraction);
        if ask {
            self.asked += 1;
        }
        ask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    fn uniform_out(m: usize) -> EnsembleOutput {
        EnsembleOutput {
            probs: vec![vec![1.0 / 3.0; 3]; m],
            classes: vec![0; m],
            confidences: vec![0.0; m],
        }
    }

    #[test]
    fn uniform_outputs_reach_max_score_and_ask() {
        let score = uncertainty_score(&uniform_out(4));
        assert!((score - 4.0 * 3f64.ln()).abs() < 1e-12);
        assert!((score - 4.394).abs() < 1e-3);
        let mut unc = UncertaintySelector::new(5, 100);
        for _ in 0..30 {
            assert!(!unc.decide(0.0));
        }
        assert!(unc.decide(score));
    }

    #[test]
    fn one_hot_outputs_never_ask() {
        let out = EnsembleOutput {
            probs: vec![vec![1.0, 0.0, 0.0]; 4],
            classes: vec![0; 4],
            confidences: vec![1.0; 4],
        };
        assert_eq!(uncertainty_score(&out), 0.0);
        let mut unc = UncertaintySelector::new(10, 10);
        assert!(!unc.decide(0.0));
    }

    #[test]
    fn pacing_spends_about_the_budget() {
        let mut rng = seeding::rng(17);
        let n = 2000;
        let mut total = 0;
        for _ in 0..20 {
            let mut unc = UncertaintySelector::new(50, n);
            for _ in 0..n {
                unc.decide(rng.gen_range(0.01..4.0));
            }
            assert!(unc.asked() <= 50);
            total += unc.asked();
        }
        let mean = total as f64 / 20.0;
        assert!(mean > 40.0, "mean asks {mean}");
    }

    #[test]
    fn random_selector_with_certain_probability() {
        let mut rng = seeding::rng(1);
        let sel = RandomSelector::for_budget(10, 10);
        assert_eq!(sel.p_ask, 1.0);
        assert!((0..100).all(|_| sel.decide(&mut rng)));
        assert_eq!(RandomSelector::for_budget(5, 100).p_ask, 0.05);
    }
}
