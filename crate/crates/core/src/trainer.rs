//! Episodic joint training of the classifier ensemble and the query policy.
//!
//! Each episode starts with an empty labelled pool, shuffles the pooled
//! training stream and walks it window by window: fuse the ensemble's
//! prediction, build the policy state, decide whether to ask, collect the
//! reward, store the transition and take one Q-learning step. The episode
//! stops when the pool reaches the budget (storing a terminal transition)
//! or the stream runs out. Only then are the classifiers trained on the
//! pool, so predictions within an episode come from the previous episode's
//! ensemble.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, MultiModalWindow, NUM_CLASSES};
use crate::error::{config, Result};
use crate::fusion::{majority_vote, EnsembleOutput, FusionMode};
use crate::models::{ClassifierConfig, Ensemble, QNetwork};
use crate::policy::{
    greedy_action, q_input_shape, raw_state, reward, select_action, state_from_output, uncertainty_score, Action,
    BaselineStrategy, EpsilonSchedule, PolicyState, QConfig, QLearner, RandomSelector, RewardSpec, StateMode,
    Transition, UncertaintySelector,
};
use crate::seeding;

/// Stream positions whose ensemble outputs are computed together.
const PREDICTION_CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub epochs_per_episode: usize,
    pub budget: usize,
    pub state_mode: StateMode,
    pub fusion: FusionMode,
    pub classifier: ClassifierConfig,
    pub q: QConfig,
    pub rewards: RewardSpec,
    pub exploration: EpsilonSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            epochs_per_episode: 10,
            budget: 10,
            state_mode: StateMode::Cont0,
            fusion: FusionMode::ModelLevel,
            classifier: ClassifierConfig::default(),
            q: QConfig::default(),
            rewards: RewardSpec::default(),
            exploration: EpsilonSchedule::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return config("budget must be at least 1");
        }
        if self.episodes == 0 {
            return config("episodes must be at least 1");
        }
        if self.classifier.hidden == 0 || self.q.hidden == 0 {
            return config("hidden sizes must be positive");
        }
        if self.classifier.num_classes != NUM_CLASSES {
            return config(format!("classifiers must have {NUM_CLASSES} classes"));
        }
        self.rewards.validate()
    }
}

/// Summary of one training episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub epsilon: f64,
    /// Windows examined before the budget filled (or the stream length).
    pub scanned: usize,
    pub labels: usize,
    pub label_counts: [usize; NUM_CLASSES],
    /// Whether the budget filled and a terminal transition was stored.
    pub terminal: bool,
    pub cumulative_reward: f64,
    pub mean_bellman_loss: Option<f64>,
    /// Final-epoch cross-entropy of each member on the pool.
    pub classifier_losses: Vec<Option<f64>>,
}

/// Trained models plus per-episode logs.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub ensemble: Ensemble,
    /// Present for Q-learning runs only.
    pub policy: Option<QNetwork>,
    pub state_mode: Option<StateMode>,
    pub logs: Vec<EpisodeLog>,
    pub terminal_transitions: usize,
}

impl TrainOutcome {
    pub fn mean_scanned(&self) -> f64 {
        if self.logs.is_empty() {
            return 0.0;
        }
        self.logs.iter().map(|l| l.scanned as f64).sum::<f64>() / self.logs.len() as f64
    }
}

pub(crate) enum Chooser<'a> {
    Learned {
        learner: &'a mut QLearner,
        mode: StateMode,
        epsilon: f64,
        modalities: Vec<usize>,
    },
    /// Greedy, read-only use of a trained network.
    Frozen {
        q: &'a QNetwork,
        mode: StateMode,
        modalities: Vec<usize>,
    },
    Random(RandomSelector),
    Uncertainty(UncertaintySelector),
}

/// Lazily computed ensemble outputs for a fixed stream and ensemble.
pub(crate) struct OutputCache<'a> {
    stream: &'a [&'a MultiModalWindow],
    ensemble: &'a Ensemble,
    outputs: Vec<Option<EnsembleOutput>>,
}

impl<'a> OutputCache<'a> {
    pub(crate) fn new(stream: &'a [&'a MultiModalWindow], ensemble: &'a Ensemble) -> Self {
        Self {
            stream,
            ensemble,
            outputs: vec![None; stream.len()],
        }
    }

    pub(crate) fn get(&mut self, i: usize) -> Result<&EnsembleOutput> {
        if self.outputs[i].is_none() {
            let end = (i + PREDICTION_CHUNK).min(self.stream.len());
            let todo: Vec<usize> = (i..end).filter(|&j| self.outputs[j].is_none()).collect();
            let windows: Vec<&MultiModalWindow> = todo.iter().map(|&j| self.stream[j]).collect();
            for (j, out) in todo.into_iter().zip(self.ensemble.outputs_batch(&windows)?) {
                self.outputs[j] = Some(out);
            }
        }
        Ok(self.outputs[i].as_ref().expect("filled above"))
    }
}

/// Result of scanning one stream.
pub(crate) struct StreamScan {
    pub labeled: Vec<usize>,
    pub scanned: usize,
    pub terminal: bool,
    pub cumulative_reward: f64,
    pub losses: Vec<f64>,
}

fn policy_state(
    cache: &mut OutputCache<'_>,
    stream: &[&MultiModalWindow],
    i: usize,
    mode: StateMode,
    modalities: &[usize],
) -> Result<PolicyState> {
    match mode {
        StateMode::Cont0 => Ok(state_from_output(cache.get(i)?)),
        StateMode::Cont1 => raw_state(stream[i], modalities),
    }
}

/// Walk `stream` in order until `budget` labels are collected.
///
/// `truth` supplies the label used for the reward of every window; learned
/// choosers store transitions and take one update per non-terminal step.
pub(crate) fn scan_stream(
    stream: &[&MultiModalWindow],
    ensemble: &Ensemble,
    chooser: &mut Chooser<'_>,
    budget: usize,
    rewards: &RewardSpec,
    rng: &mut ChaCha8Rng,
) -> Result<StreamScan> {
    let mut scan = StreamScan {
        labeled: Vec::new(),
        scanned: 0,
        terminal: false,
        cumulative_reward: 0.0,
        losses: Vec::new(),
    };
    if budget == 0 {
        return Ok(scan);
    }
    let mut cache = OutputCache::new(stream, ensemble);
    let mut next_state: Option<PolicyState> = None;

    for i in 0..stream.len() {
        scan.scanned = i + 1;
        let predicted = majority_vote(cache.get(i)?);
        let (action, state) = match chooser {
            Chooser::Learned {
                learner,
                mode,
                epsilon,
                modalities,
            } => {
                let s = match next_state.take() {
                    Some(s) => s,
                    None => policy_state(&mut cache, stream, i, *mode, modalities)?,
                };
                (select_action(&learner.q, &s, *epsilon, rng)?, Some(s))
            }
            Chooser::Frozen { q, mode, modalities } => {
                let s = policy_state(&mut cache, stream, i, *mode, modalities)?;
                (greedy_action(q, &s)?, None)
            }
            Chooser::Random(sel) => (ask_if(sel.decide(rng)), None),
            Chooser::Uncertainty(sel) => {
                let score = uncertainty_score(cache.get(i)?);
                (ask_if(sel.decide(score)), None)
            }
        };
        if action == Action::Ask {
            scan.labeled.push(i);
        }
        let truth = stream[i].label.ok_or_else(|| crate::Error::Config("stream window without a label".into()))?;
        let r = reward(action, predicted, truth, rewards);
        scan.cumulative_reward += r;
        let filled = scan.labeled.len() == budget;

        if let (
            Chooser::Learned {
                learner,
                mode,
                modalities,
                ..
            },
            Some(state),
        ) = (&mut *chooser, state)
        {
            if filled {
                learner.memory.push(Transition {
                    state,
                    action,
                    reward: r,
                    next: None,
                });
            } else if i + 1 < stream.len() {
                let next = policy_state(&mut cache, stream, i + 1, *mode, modalities)?;
                learner.memory.push(Transition {
                    state,
                    action,
                    reward: r,
                    next: Some(next.clone()),
                });
                next_state = Some(next);
                if let Some(loss) = learner.update(rng)? {
                    scan.losses.push(loss);
                }
            }
        }
        if filled {
            scan.terminal = true;
            break;
        }
    }
    Ok(scan)
}

fn ask_if(ask: bool) -> Action {
    if ask {
        Action::Ask
    } else {
        Action::NoAsk
    }
}

fn training_stream(dataset: &Dataset) -> Result<Vec<&MultiModalWindow>> {
    dataset.validate()?;
    let stream: Vec<&MultiModalWindow> = dataset.train.iter().flat_map(|s| &s.windows).collect();
    if stream.is_empty() {
        return config("training set is empty");
    }
    if let Some(w) = stream.iter().find(|w| w.label.is_none()) {
        return config(format!("training window {} of subject {} has no label", w.index, w.subject));
    }
    Ok(stream)
}

/// Fresh ensemble and Q-learner for a dataset, drawn from `rng`.
pub fn initial_models(dataset: &Dataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<(Ensemble, QLearner)> {
    let ensemble = Ensemble::new(&dataset.schema, cfg.fusion, &cfg.classifier, rng)?;
    let (input_dim, seq_len) = q_input_shape(&ensemble, cfg.state_mode, &dataset.schema.dims(), dataset.schema.seq_len);
    let q = QNetwork::new(input_dim, seq_len, cfg.q.hidden, rng);
    Ok((ensemble, QLearner::new(q, cfg.q.clone(), cfg.rewards)))
}

/// Joint training with a learned query policy from random initial models.
pub fn run_mmql(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = seeding::rng(cfg.seed);
    let (ensemble, learner) = initial_models(dataset, cfg, &mut rng)?;
    run_mmql_from(dataset, cfg, ensemble, learner, &mut rng)
}

/// Joint training starting from the given models.
pub fn run_mmql_from(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut ensemble: Ensemble,
    mut learner: QLearner,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    let logs = run_mmql_episodes(dataset, cfg, &mut ensemble, &mut learner, 0..cfg.episodes, rng)?;
    Ok(TrainOutcome {
        terminal_transitions: logs.iter().filter(|l| l.terminal).count(),
        ensemble,
        policy: Some(learner.q),
        state_mode: Some(cfg.state_mode),
        logs,
    })
}

/// Runs the given episode indices (out of `cfg.episodes`) in place, so
/// training can be inspected or checkpointed between calls.
pub fn run_mmql_episodes(
    dataset: &Dataset,
    cfg: &TrainConfig,
    ensemble: &mut Ensemble,
    learner: &mut QLearner,
    episodes: std::ops::Range<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpisodeLog>> {
    cfg.validate()?;
    let mut stream = training_stream(dataset)?;
    let modalities = ensemble.modalities();
    let mut logs = Vec::with_capacity(episodes.len());
    for episode in episodes {
        stream.shuffle(rng);
        let epsilon = cfg.exploration.epsilon(episode, cfg.episodes);
        let mut chooser = Chooser::Learned {
            learner: &mut *learner,
            mode: cfg.state_mode,
            epsilon,
            modalities: modalities.clone(),
        };
        let scan = scan_stream(&stream, ensemble, &mut chooser, cfg.budget, &cfg.rewards, rng)?;
        logs.push(finish_episode(ensemble, &stream, scan, episode, epsilon, cfg, rng)?);
    }
    Ok(logs)
}

/// The same episodic loop with a fixed heuristic in place of the policy.
pub fn run_baseline(dataset: &Dataset, cfg: &TrainConfig, strategy: BaselineStrategy) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = seeding::rng(cfg.seed);
    let ensemble = Ensemble::new(&dataset.schema, cfg.fusion, &cfg.classifier, &mut rng)?;
    run_baseline_from(dataset, cfg, strategy, ensemble, &mut rng)
}

pub fn run_baseline_from(
    dataset: &Dataset,
    cfg: &TrainConfig,
    strategy: BaselineStrategy,
    mut ensemble: Ensemble,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut stream = training_stream(dataset)?;
    let mut logs = Vec::with_capacity(cfg.episodes);
    let mut terminal_transitions = 0;
    for episode in 0..cfg.episodes {
        stream.shuffle(rng);
        let mut chooser = match strategy {
            BaselineStrategy::Rnd => Chooser::Random(RandomSelector::for_budget(cfg.budget, stream.len())),
            BaselineStrategy::Unc => Chooser::Uncertainty(UncertaintySelector::new(cfg.budget, stream.len())),
        };
        let scan = scan_stream(&stream, &ensemble, &mut chooser, cfg.budget, &cfg.rewards, rng)?;
        terminal_transitions += usize::from(scan.terminal);
        logs.push(finish_episode(&mut ensemble, &stream, scan, episode, 0.0, cfg, rng)?);
    }
    Ok(TrainOutcome {
        ensemble,
        policy: None,
        state_mode: None,
        logs,
        terminal_transitions,
    })
}

fn finish_episode(
    ensemble: &mut Ensemble,
    stream: &[&MultiModalWindow],
    scan: StreamScan,
    episode: usize,
    epsilon: f64,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<EpisodeLog> {
    debug_assert!(scan.labeled.len() <= cfg.budget);
    let pool: Vec<(&MultiModalWindow, usize)> = scan
        .labeled
        .iter()
        .map(|&i| (stream[i], stream[i].label.expect("validated")))
        .collect();
    let mut label_counts = [0; NUM_CLASSES];
    for (_, y) in &pool {
        label_counts[*y] += 1;
    }
    let reports = ensemble.train(&pool, cfg.epochs_per_episode, rng)?;
    let mean_bellman_loss = if scan.losses.is_empty() {
        None
    } else {
        Some(scan.losses.iter().sum::<f64>() / scan.losses.len() as f64)
    };
    Ok(EpisodeLog {
        episode,
        epsilon,
        scanned: scan.scanned,
        labels: pool.len(),
        label_counts,
        terminal: scan.terminal,
        cumulative_reward: scan.cumulative_reward,
        mean_bellman_loss,
        classifier_losses: reports.iter().map(|r| r.final_loss()).collect(),
    })
}
