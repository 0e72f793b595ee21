//! Experiment grids over strategy × fusion × budget × repeat, and the
//! reports written from them.

mod report;

pub use report::{aggregate, write_reports, AggregateRow, BudgetCurve, ScannedSeries, SubjectBars};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datagen::{generate, load_dataset, Dataset, GeneratorConfig, Schema, SubjectId};
use crate::error::{config, Error, Result};
use crate::fusion::FusionMode;
use crate::personalize::{personalize_repeated, PersonalizationResult, Querier};
use crate::policy::{BaselineStrategy, StateMode};
use crate::seeding;
use crate::trainer::{run_baseline, run_mmql, TrainConfig, TrainOutcome};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "MMAL_OUT_DIR";

/// A data-selection strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    MmqlCont0,
    MmqlCont1,
    Unc,
    Rnd,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::MmqlCont0, Strategy::MmqlCont1, Strategy::Unc, Strategy::Rnd];

    pub fn state_mode(self) -> Option<StateMode> {
        match self {
            Strategy::MmqlCont0 => Some(StateMode::Cont0),
            Strategy::MmqlCont1 => Some(StateMode::Cont1),
            _ => None,
        }
    }

    pub fn baseline(self) -> Option<BaselineStrategy> {
        match self {
            Strategy::Unc => Some(BaselineStrategy::Unc),
            Strategy::Rnd => Some(BaselineStrategy::Rnd),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::MmqlCont0 => "mmql-cont0",
            Strategy::MmqlCont1 => "mmql-cont1",
            Strategy::Unc => "unc",
            Strategy::Rnd => "rnd",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

impl Serialize for Strategy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A whole experiment, loadable from TOML. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    /// `model-f`, `feature-f`, `per-modality` (one entry per modality) or a
    /// modality name.
    pub fusions: Vec<String>,
    pub budgets: Vec<usize>,
    /// Independent datasets and model initializations.
    pub repeats: usize,
    /// Reshuffles of each test subject's stream.
    pub personalization_repeats: usize,
    pub personalization_epochs: usize,
    /// Load data from here instead of generating it.
    pub dataset: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strategies: Strategy::ALL.to_vec(),
            fusions: vec!["model-f".into(), "feature-f".into(), "per-modality".into()],
            budgets: vec![5, 10, 20, 50, 100],
            repeats: 1,
            personalization_repeats: 10,
            personalization_epochs: 10,
            dataset: None,
            generator: GeneratorConfig::desk(),
            train: TrainConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The configured directory, unless the environment overrides it.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.fusions.is_empty() || self.budgets.is_empty() {
            return config("strategies, fusions and budgets must all be non-empty");
        }
        if self.budgets.contains(&0) {
            return config("grid budgets must be positive");
        }
        if self.repeats == 0 || self.personalization_repeats == 0 {
            return config("repeat counts must be positive");
        }
        if self.dataset.is_none() {
            self.generator.validate()?;
        }
        self.train.validate()
    }

    /// Expands the fusion names against a schema, dropping duplicates.
    pub fn fusion_modes(&self, schema: &Schema) -> Result<Vec<FusionMode>> {
        let mut modes = Vec::new();
        for name in &self.fusions {
            let expanded = if name.eq_ignore_ascii_case("per-modality") {
                (0..schema.modalities.len()).map(FusionMode::SingleModality).collect()
            } else {
                vec![FusionMode::parse(name, schema)?]
            };
            for m in expanded {
                if !modes.contains(&m) {
                    modes.push(m);
                }
            }
        }
        Ok(modes)
    }
}

/// One (strategy, fusion, budget, repeat) combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: Strategy,
    pub fusion: FusionMode,
    pub budget: usize,
    pub repeat: usize,
}

impl Cell {
    /// Seed that depends only on the cell's identity, not its position.
    pub fn seed(&self, master: u64) -> u64 {
        seeding::derive(
            master,
            &[
                seeding::hash_str(&self.strategy.to_string()),
                seeding::hash_str(&self.fusion.to_string()),
                self.budget as u64,
                self.repeat as u64,
            ],
        )
    }
}

/// One report line: a test subject under one cell, averaged over the
/// personalization reshuffles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: Strategy,
    pub fusion: String,
    pub budget: usize,
    pub seed: u64,
    pub repeat: usize,
    pub subject: SubjectId,
    pub acc_before: f64,
    pub acc_after: f64,
    pub f1_before: f64,
    pub f1_after: f64,
    /// Mean windows scanned per training episode.
    pub scanned_train: f64,
    /// Mean windows scanned per personalization run.
    pub scanned_personalize: f64,
    pub labels_used: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: Cell,
    pub error: String,
}

/// Everything a grid run produces.
#[derive(Clone, Debug, Default)]
pub struct GridResult {
    pub rows: Vec<ReportRow>,
    pub failures: Vec<CellFailure>,
    /// Largest label count of any training episode, per budget.
    pub max_episode_labels: Vec<(usize, usize)>,
    /// Largest label count of any personalization run, per budget.
    pub max_personalization_labels: Vec<(usize, usize)>,
    pub fusion_labels: Vec<(String, String)>,
}

impl GridResult {
    /// Whether any training episode or personalization exceeded its budget.
    pub fn budget_violations(&self) -> usize {
        self.max_episode_labels
            .iter()
            .chain(&self.max_personalization_labels)
            .filter(|(b, used)| used > b)
            .count()
    }
}

struct CellOutput {
    rows: Vec<ReportRow>,
    max_episode_labels: usize,
    max_personalization_labels: usize,
}

/// The dataset of one repeat, z-scored with training statistics.
pub fn repeat_dataset(cfg: &ExperimentConfig, repeat: usize) -> Result<Dataset> {
    let raw = match &cfg.dataset {
        Some(path) => load_dataset(path)?,
        None => generate(&GeneratorConfig {
            seed: seeding::derive(cfg.seed, &[seeding::hash_str("data"), repeat as u64]),
            ..cfg.generator.clone()
        })?,
    };
    Ok(raw.normalized()?.0)
}

/// Train one cell's models.
pub fn train_cell(data: &Dataset, base: &TrainConfig, cell: &Cell, master_seed: u64) -> Result<TrainOutcome> {
    let train_cfg = TrainConfig {
        budget: cell.budget,
        fusion: cell.fusion,
        state_mode: cell.strategy.state_mode().unwrap_or(base.state_mode),
        seed: cell.seed(master_seed),
        ..base.clone()
    };
    match cell.strategy.baseline() {
        Some(b) => run_baseline(data, &train_cfg, b),
        None => run_mmql(data, &train_cfg),
    }
}

/// The query strategy used on test subjects for a trained cell.
pub fn querier_for<'a>(strategy: Strategy, outcome: &'a TrainOutcome) -> Result<Querier<'a>> {
    match (strategy.baseline(), &outcome.policy, outcome.state_mode) {
        (Some(b), _, _) => Ok(Querier::Baseline(b)),
        (None, Some(q), Some(mode)) => Ok(Querier::Policy { q, mode }),
        _ => config(format!("{strategy} needs a trained policy")),
    }
}

fn run_cell(cfg: &ExperimentConfig, data: &Dataset, cell: &Cell) -> Result<CellOutput> {
    let seed = cell.seed(cfg.seed);
    let outcome = train_cell(data, &cfg.train, cell, cfg.seed)?;
    let max_episode_labels = outcome.logs.iter().map(|l| l.labels).max().unwrap_or(0);
    if max_episode_labels > cell.budget {
        return Err(Error::Contract(format!(
            "episode acquired {max_episode_labels} labels with budget {}",
            cell.budget
        )));
    }
    let querier = querier_for(cell.strategy, &outcome)?;
    let scanned_train = outcome.mean_scanned();
    let fusion = cell.fusion.label(&data.schema);

    let mut rows = Vec::with_capacity(data.test.len());
    let mut max_personalization_labels = 0;
    for session in &data.test {
        let results = personalize_repeated(
            session,
            &outcome.ensemble,
            querier,
            cell.budget,
            cfg.personalization_epochs,
            cfg.personalization_repeats,
            seed,
        )?;
        max_personalization_labels = results
            .iter()
            .map(|r| r.budget_used)
            .max()
            .unwrap_or(0)
            .max(max_personalization_labels);
        if let Some(row) = summarize(cell, seed, &fusion, session.subject, scanned_train, &results) {
            rows.push(row);
        }
    }
    Ok(CellOutput {
        rows,
        max_episode_labels,
        max_personalization_labels,
    })
}

fn summarize(
    cell: &Cell,
    seed: u64,
    fusion: &str,
    subject: SubjectId,
    scanned_train: f64,
    results: &[PersonalizationResult],
) -> Option<ReportRow> {
    let [acc_before, acc_after, f1_before, f1_after] = crate::personalize::mean_metrics(results)?;
    let n = results.len() as f64;
    Some(ReportRow {
        strategy: cell.strategy,
        fusion: fusion.to_string(),
        budget: cell.budget,
        seed,
        repeat: cell.repeat,
        subject,
        acc_before,
        acc_after,
        f1_before,
        f1_after,
        scanned_train,
        scanned_personalize: results.iter().map(|r| r.scanned as f64).sum::<f64>() / n,
        labels_used: results.iter().map(|r| r.budget_used as f64).sum::<f64>() / n,
    })
}

/// All cells of the grid, in report order.
pub fn grid_cells(cfg: &ExperimentConfig, schema: &Schema) -> Result<Vec<Cell>> {
    let fusions = cfg.fusion_modes(schema)?;
    let mut cells = Vec::new();
    for &strategy in &cfg.strategies {
        for &fusion in &fusions {
            for &budget in &cfg.budgets {
                for repeat in 0..cfg.repeats {
                    cells.push(Cell {
                        strategy,
                        fusion,
                        budget,
                        repeat,
                    });
                }
            }
        }
    }
    Ok(cells)
}

/// Runs every cell (in parallel) and collects rows in a fixed order. A
/// failing cell is recorded and the rest continue; the run errors only if
/// every cell fails.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridResult> {
    cfg.validate()?;
    let datasets: Vec<Dataset> = (0..cfg.repeats).map(|r| repeat_dataset(cfg, r)).collect::<Result<_>>()?;
    let schema = &datasets[0].schema;
    let cells = grid_cells(cfg, schema)?;
    let outputs: Vec<Result<CellOutput>> = cells
        .par_iter()
        .map(|cell| run_cell(cfg, &datasets[cell.repeat], cell))
        .collect();

    let mut result = GridResult {
        fusion_labels: cfg
            .fusion_modes(schema)?
            .iter()
            .map(|f| (f.to_string(), f.label(schema)))
            .collect(),
        ..GridResult::default()
    };
    let mut episode_max = std::collections::BTreeMap::new();
    let mut personal_max = std::collections::BTreeMap::new();
    for (cell, out) in cells.iter().zip(outputs) {
        match out {
            Ok(out) => {
                let e = episode_max.entry(cell.budget).or_insert(0);
                *e = out.max_episode_labels.max(*e);
                let p = personal_max.entry(cell.budget).or_insert(0);
                *p = out.max_personalization_labels.max(*p);
                result.rows.extend(out.rows);
            }
            Err(e) => result.failures.push(CellFailure {
                cell: *cell,
                error: e.to_string(),
            }),
        }
    }
    if result.failures.len() == cells.len() {
        return Err(Error::Config(format!(
            "all {} grid cells failed; first error: {}",
            cells.len(),
            result.failures[0].error
        )));
    }
    result.max_episode_labels = episode_max.into_iter().collect();
    result.max_personalization_labels = personal_max.into_iter().collect();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Modality;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), cfg);
        assert!(ExperimentConfig::from_toml("budgetz = [1]").is_err());
    }

    #[test]
    fn per_modality_expands() {
        let schema = Schema::new(2, vec![Modality::new("A", 1), Modality::new("B", 1)]);
        let cfg = ExperimentConfig {
            fusions: vec!["model-f".into(), "per-modality".into(), "b".into()],
            ..ExperimentConfig::default()
        };
        assert_eq!(
            cfg.fusion_modes(&schema).unwrap(),
            vec![
                FusionMode::ModelLevel,
                FusionMode::SingleModality(0),
                FusionMode::SingleModality(1)
            ]
        );
    }

    #[test]
    fn empty_lists_rejected() {
        let cfg = ExperimentConfig {
            budgets: vec![],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cell_seeds_depend_on_identity() {
        let a = Cell {
            strategy: Strategy::Rnd,
            fusion: FusionMode::ModelLevel,
            budget: 5,
            repeat: 0,
        };
        let b = Cell { budget: 10, ..a };
        assert_eq!(a.seed(1), a.seed(1));
        assert_ne!(a.seed(1), b.seed(1));
        assert_ne!(a.seed(1), a.seed(2));
    }
}
