//! Query policy: state construction, reward, replay memory, Q-learning
//! updates, exploration and the random / uncertainty baselines.

mod baseline;
mod replay;

pub use baseline::{uncertainty_score, BaselineStrategy, RandomSelector, UncertaintySelector};
pub use replay::{ReplayMemory, Transition};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::MultiModalWindow;
use crate::error::{contract, Result};
use crate::fusion::{feature_concat, EnsembleOutput};
use crate::models::{Ensemble, QNetwork};
use crate::numerics::{clip_global_norm, AdamConfig, AdamState};

/// What the Q-network sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateMode {
    /// Per-member class probabilities followed by that member's confidence.
    Cont0,
    /// The window's raw features, concatenated across modalities per step.
    Cont1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    NoAsk,
    Ask,
}

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::NoAsk => 0,
            Action::Ask => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Action::Ask
        } else {
            Action::NoAsk
        }
    }
}

/// Flattened Q-network input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub mode: StateMode,
    pub values: Vec<f64>,
}

impl PolicyState {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `[p^(1), C^(1), ..., p^(M), C^(M)]`, length `M·(K+1)`.
pub fn state_from_output(out: &EnsembleOutput) -> PolicyState {
    let mut values = Vec::with_capacity(out.probs.len() * 4);
    for (p, c) in out.probs.iter().zip(&out.confidences) {
        values.extend_from_slice(p);
        values.push(*c);
    }
    PolicyState {
        mode: StateMode::Cont0,
        values,
    }
}

/// Raw features of `modalities`, flattened step by step.
pub fn raw_state(window: &MultiModalWindow, modalities: &[usize]) -> Result<PolicyState> {
    Ok(PolicyState {
        mode: StateMode::Cont1,
        values: feature_concat(window, modalities)?.into_vec(),
    })
}

pub fn build_state(window: &MultiModalWindow, ensemble: &Ensemble, mode: StateMode) -> Result<PolicyState> {
    let needed = ensemble.modalities();
    if needed.last().is_some_and(|&m| m >= window.features.len()) {
        return contract("ensemble reads a modality the window does not have");
    }
    match mode {
        StateMode::Cont0 => Ok(state_from_output(&ensemble.outputs(window)?)),
        StateMode::Cont1 => raw_state(window, &needed),
    }
}

/// `(input_dim, seq_len)` of the Q-network for an ensemble and mode.
pub fn q_input_shape(ensemble: &Ensemble, mode: StateMode, window_dims: &[usize], seq_len: usize) -> (usize, usize) {
    match mode {
        StateMode::Cont0 => (ensemble.len() * (ensemble.num_classes() + 1), 1),
        StateMode::Cont1 => (ensemble.modalities().iter().map(|&m| window_dims[m]).sum(), seq_len),
    }
}

/// Label cost and prediction payoffs, plus the discount factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSpec {
    pub request: f64,
    pub correct: f64,
    pub incorrect: f64,
    pub gamma: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            request: -0.05,
            correct: 1.0,
            incorrect: -1.0,
            gamma: 0.9,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return crate::error::config("gamma must lie in [0, 1)");
        }
        Ok(())
    }
}

pub fn reward(action: Action, predicted: usize, truth: usize, spec: &RewardSpec) -> f64 {
    match action {
        Action::Ask => spec.request,
        Action::NoAsk if predicted == truth => spec.correct,
        Action::NoAsk => spec.incorrect,
    }
}

/// `r` for terminal transitions, otherwise `r + γ · max_a Q(s', a)`.
pub fn bellman_target(t: &Transition, q: &QNetwork, spec: &RewardSpec) -> Result<f64> {
    match &t.next {
        None => Ok(t.reward),
        Some(next) => {
            let scores = q.forward(&next.values)?;
            Ok(t.reward + spec.gamma * scores[0].max(scores[1]))
        }
    }
}

/// Greedy action, with lower-index tie-break (towards "do not ask").
pub fn greedy_action(q: &QNetwork, state: &PolicyState) -> Result<Action> {
    let s = q.forward(&state.values)?;
    Ok(if s[1] > s[0] { Action::Ask } else { Action::NoAsk })
}

/// Epsilon-greedy choice.
pub fn select_action(q: &QNetwork, state: &PolicyState, epsilon: f64, rng: &mut impl Rng) -> Result<Action> {
    if !(0.0..=1.0).contains(&epsilon) {
        return contract(format!("epsilon {epsilon} outside [0, 1]"));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Ok(Action::from_index(rng.gen_range(0..2)));
    }
    greedy_action(q, state)
}

/// Linear decay from `start` to `end` over the first `decay_fraction` of
/// the episodes, constant afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_fraction: 0.5,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            start: epsilon,
            end: epsilon,
            decay_fraction: 0.0,
        }
    }

    pub fn epsilon(&self, episode: usize, episodes: usize) -> f64 {
        let span = (self.decay_fraction * episodes as f64).round();
        if span <= 0.0 || episode as f64 >= span {
            return self.end;
        }
        let frac = episode as f64 / span;
        self.start + (self.end - self.start) * frac
    }
}

/// Q-network hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// When set, bootstrap targets come from a copy refreshed every this
    /// many updates instead of the live network.
    pub target_sync: Option<usize>,
    pub max_grad_norm: Option<f64>,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            learning_rate: 0.001,
            batch_size: 32,
            replay_capacity: 10_000,
            target_sync: None,
            max_grad_norm: None,
        }
    }
}

/// Q-network together with its optimizer and replay memory.
#[derive(Clone, Debug)]
pub struct QLearner {
    pub q: QNetwork,
    pub memory: ReplayMemory,
    pub config: QConfig,
    pub rewards: RewardSpec,
    adam: AdamState,
    target: Option<QNetwork>,
    updates: usize,
}

impl QLearner {
    pub fn new(q: QNetwork, config: QConfig, rewards: RewardSpec) -> Self {
        let adam = AdamState::new(&q.net.parameters(), AdamConfig::with_learning_rate(config.learning_rate));
        Self {
            target: config.target_sync.map(|_| q.clone()),
            memory: ReplayMemory::new(config.replay_capacity),
            q,
            config,
            rewards,
            adam,
            updates: 0,
        }
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// One Adam step on the mean squared Bellman error of a sampled batch.
    /// Returns the batch loss before the step, or `None` if memory is empty.
    pub fn update(&mut self, rng: &mut impl Rng) -> Result<Option<f64>> {
        let batch = self.memory.sample(self.config.batch_size, rng);
        if batch.is_empty() {
            return Ok(None);
        }
        let bootstrap = self.target.as_ref().unwrap_or(&self.q);
        let next: Vec<&[f64]> = batch
            .iter()
            .filter_map(|t| t.next.as_ref().map(|s| s.values.as_slice()))
            .collect();
        let mut next_scores = if next.is_empty() {
            Vec::new()
        } else {
            bootstrap.forward_batch(&next)?
        }
        .into_iter();
        let targets: Vec<f64> = batch
            .iter()
            .map(|t| match t.next {
                None => t.reward,
                Some(_) => {
                    let s = next_scores.next().expect("one score per next state");
                    t.reward + self.rewards.gamma * s[0].max(s[1])
                }
            })
            .collect();
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.values.as_slice()).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action.index()).collect();
        let (loss, mut grads) = self.q.bellman_loss_and_gradients(&states, &actions, &targets)?;
        if let Some(max) = self.config.max_grad_norm {
            clip_global_norm(&mut grads, max);
        }
        self.adam.update(&mut self.q.net.parameters_mut(), &grads)?;
        self.updates += 1;
        if let (Some(every), Some(target)) = (self.config.target_sync, self.target.as_mut()) {
            if every > 0 && self.updates % every == 0 {
                *target = self.q.clone();
            }
        }
        Ok(Some(loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn reward_table() {
        let spec = RewardSpec::default();
        for p in 0..3 {
            for y in 0..3 {
                assert_eq!(reward(Action::Ask, p, y, &spec), -0.05);
                let expected = if p == y { 1.0 } else { -1.0 };
                assert_eq!(reward(Action::NoAsk, p, y, &spec), expected);
            }
        }
    }

    #[test]
    fn epsilon_schedule_shape() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.epsilon(0, 100), 1.0);
        assert!((s.epsilon(25, 100) - 0.525).abs() < 1e-12);
        assert_eq!(s.epsilon(50, 100), 0.05);
        assert_eq!(s.epsilon(99, 100), 0.05);
        assert_eq!(EpsilonSchedule::constant(0.3).epsilon(0, 10), 0.3);
    }

    #[test]
    fn select_action_validates_epsilon() {
        let mut rng = seeding::rng(0);
        let q = QNetwork::new(4, 1, 3, &mut rng);
        let s = PolicyState {
            mode: StateMode::Cont0,
            values: vec![0.1; 4],
        };
        assert!(select_action(&q, &s, 1.5, &mut rng).is_err());
        assert!(select_action(&q, &s, -0.1, &mut rng).is_err());
    }

    #[test]
    fn gamma_validation() {
        let mut spec = RewardSpec::default();
        assert!(spec.validate().is_ok());
        spec.gamma = 1.0;
        assert!(spec.validate().is_err());
    }
}
