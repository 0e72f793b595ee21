use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mmal::datagen::{generate, load_dataset, save_dataset, Dataset, DatasetFormat, GeneratorConfig};
use mmal::fusion::FusionMode;
use mmal::harness::{run_grid, write_reports, Cell, ExperimentConfig, Strategy};
use mmal::models::{checkpoint, Ensemble, QNetwork};
use mmal::personalize::{personalize_repeated, pooled_metrics, Metrics, PersonalizationResult, Querier};
use mmal::policy::StateMode;
use mmal::trainer::{run_baseline, run_mmql, TrainConfig};

#[derive(Parser)]
#[command(name = "mmal", version, about = "Multi-modal active learning with a learned query policy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset directory.
    Generate(GenerateArgs),
    /// Train group classifiers (and a policy for mmql strategies).
    Train(TrainArgs),
    /// Adapt trained classifiers to each test subject.
    Personalize(PersonalizeArgs),
    /// Score trained classifiers on the test subjects without adaptation.
    Evaluate(EvaluateArgs),
    /// Run an experiment grid and write the report files.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Experiment TOML whose `generator` table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `desk` (small dims) or `full` (full dims); ignored with --config.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_format, default_value = "binary")]
    format: DatasetFormat,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Output model directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "mmql-cont0")]
    strategy: Strategy,
    #[arg(long, default_value_t = 10)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `model-f`, `feature-f` or a modality name.
    #[arg(long, default_value = "model-f")]
    fusion: String,
    /// Experiment TOML whose `train` table supplies the hyperparameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for results.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PersonalizeArgs {
    #[command(flatten)]
    common: ModelArgs,
    #[arg(long, default_value_t = 10)]
    budget: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Reshuffles of each subject's stream.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: ModelArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment TOML; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config and the environment).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<DatasetFormat, String> {
    match s {
        "binary" => Ok(DatasetFormat::Binary),
        "jsonl" => Ok(DatasetFormat::Jsonl),
        _ => Err(format!("unknown format {s:?}, expected binary or jsonl")),
    }
}

/// Written next to the checkpoints by `train`.
#[derive(Serialize, Deserialize)]
struct ModelMeta {
    strategy: Strategy,
    fusion: FusionMode,
    state_mode: Option<StateMode>,
    budget: usize,
    seed: u64,
    train: TrainConfig,
}

/// Accuracy and macro-F1 of pooled confusion counts, so the summary does
/// not depend on the number of reshuffles.
#[derive(Serialize)]
struct Score {
    accuracy: f64,
    macro_f1: f64,
}

impl From<&Metrics> for Score {
    fn from(m: &Metrics) -> Self {
        Self {
            accuracy: m.accuracy,
            macro_f1: m.macro_f1,
        }
    }
}

#[derive(Serialize)]
struct SubjectSummary {
    subject: u32,
    before: Option<Score>,
    after: Option<Score>,
}

#[derive(Serialize)]
struct Summary {
    strategy: Strategy,
    budget: usize,
    subjects: Vec<SubjectSummary>,
    before: Option<Score>,
    after: Option<Score>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let causes: Vec<String> = err.chain().map(|c| c.to_string()).collect();
            let msg = serde_json::json!({ "error": causes[0], "causes": &causes[1..] });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Personalize(a) => cmd_personalize(&a.common, a.budget, a.epochs, a.repeats),
        Command::Evaluate(a) => cmd_personalize(&a.common, 0, 0, 1),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_normalized(dir: &Path) -> Result<Dataset> {
    let raw = load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    Ok(raw.normalized()?.0)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut gen = match &a.config {
        Some(p) => load_config(Some(p))?.generator,
        None => match a.preset.as_str() {
            "desk" => GeneratorConfig::desk(),
            "full" => GeneratorConfig::full(),
            other => bail!("unknown preset {other:?}, expected desk or full"),
        },
    };
    if let Some(seed) = a.seed {
        gen.seed = seed;
    }
    let dataset = generate(&gen)?;
    save_dataset(&a.out, &dataset, a.format)?;
    println!(
        "wrote {} train and {} test subjects to {}",
        dataset.train.len(),
        dataset.test.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let data = load_normalized(&a.data)?;
    let cfg = load_config(a.config.as_deref())?;
    let fusion = FusionMode::parse(&a.fusion, &data.schema)?;
    let cell = Cell {
        strategy: a.strategy,
        fusion,
        budget: a.budget,
        repeat: 0,
    };
    let train = TrainConfig {
        budget: a.budget,
        fusion,
        state_mode: a.strategy.state_mode().unwrap_or(cfg.train.state_mode),
        seed: cell.seed(a.seed),
        episodes: a.episodes.unwrap_or(cfg.train.episodes),
        ..cfg.train
    };
    let outcome = match a.strategy.baseline() {
        Some(b) => run_baseline(&data, &train, b)?,
        None => run_mmql(&data, &train)?,
    };

    fs::create_dir_all(&a.out)?;
    checkpoint::save(&a.out.join("ensemble.json"), &outcome.ensemble)?;
    if let Some(q) = &outcome.policy {
        checkpoint::save(&a.out.join("policy.json"), q)?;
    }
    write_jsonl(&a.out.join("episodes.jsonl"), &outcome.logs)?;
    write_json(
        &a.out.join("meta.json"),
        &ModelMeta {
            strategy: a.strategy,
            fusion,
            state_mode: outcome.state_mode,
            budget: a.budget,
            seed: a.seed,
            train,
        },
    )?;
    println!(
        "trained {} ({}) for {} episodes, mean scanned {:.1}",
        a.strategy,
        fusion.label(&data.schema),
        outcome.logs.len(),
        outcome.mean_scanned()
    );
    Ok(())
}

fn cmd_personalize(a: &ModelArgs, budget: usize, epochs: usize, repeats: usize) -> Result<()> {
    if repeats == 0 {
        bail!("repeats must be positive");
    }
    let data = load_normalized(&a.data)?;
    let meta: ModelMeta = serde_json::from_slice(
        &fs::read(a.model.join("meta.json")).with_context(|| format!("reading {}", a.model.display()))?,
    )
    .context("parsing meta.json")?;
    let ensemble: Ensemble = checkpoint::load(&a.model.join("ensemble.json")).context("loading ensemble")?;
    let policy: Option<QNetwork> = match meta.strategy.baseline() {
        Some(_) => None,
        None => Some(checkpoint::load(&a.model.join("policy.json")).context("loading policy")?),
    };
    let querier = match (meta.strategy.baseline(), &policy, meta.state_mode) {
        (Some(b), _, _) => Querier::Baseline(b),
        (None, Some(q), Some(mode)) => Querier::Policy { q, mode },
        _ => bail!("model directory has no policy state mode"),
    };

    let mut all: Vec<PersonalizationResult> = Vec::new();
    let mut subjects = Vec::new();
    for session in &data.test {
        let results = personalize_repeated(session, &ensemble, querier, budget, epochs, repeats, a.seed)?;
        let pooled = pooled_metrics(&results);
        subjects.push(SubjectSummary {
            subject: session.subject,
            before: pooled.as_ref().map(|p| Score::from(&p.0)),
            after: pooled.as_ref().map(|p| Score::from(&p.1)),
        });
        all.extend(results);
    }
    let pooled = pooled_metrics(&all);
    let summary = Summary {
        strategy: meta.strategy,
        budget,
        subjects,
        before: pooled.as_ref().map(|p| Score::from(&p.0)),
        after: pooled.as_ref().map(|p| Score::from(&p.1)),
    };

    fs::create_dir_all(&a.out)?;
    write_jsonl(&a.out.join("results.jsonl"), &all)?;
    write_json(&a.out.join("summary.json"), &summary)?;
    if let (Some(b), Some(af)) = (&summary.before, &summary.after) {
        println!(
            "ACC {:.1} -> {:.1}  F1 {:.1} -> {:.1}",
            b.accuracy, af.accuracy, b.macro_f1, af.macro_f1
        );
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    let dir = match a.out {
        Some(dir) => dir,
        None => cfg.resolved_output_dir(),
    };
    cfg.output_dir = dir.clone();
    let result = run_grid(&cfg)?;
    write_reports(&dir, &result)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    println!(
        "{} rows, {} failed cells, {} budget violations -> {}",
        result.rows.len(),
        result.failures.len(),
        result.budget_violations(),
        dir.display()
    );
    Ok(())
}
