//! Run a small experiment grid and write the CSV and plot-series files.
//! Pass a TOML path to run a different grid.

use mmal::harness::{aggregate, run_grid, write_reports, ExperimentConfig, Strategy};

fn main() -> anyhow::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => {
            let mut cfg = ExperimentConfig {
                strategies: vec![Strategy::MmqlCont0, Strategy::Rnd],
                fusions: vec!["model-f".into(), "feature-f".into()],
                budgets: vec![5, 10],
                personalization_repeats: 2,
                output_dir: "out/example-grid".into(),
                ..ExperimentConfig::default()
            };
            cfg.train.episodes = 6;
            cfg.train.classifier.hidden = 16;
            cfg
        }
    };
    let result = run_grid(&cfg)?;
    let dir = cfg.resolved_output_dir();
    write_reports(&dir, &result)?;
    println!("{:<11} {:<10} {:>6} {:>14} {:>14}", "strategy", "fusion", "budget", "ACC", "F1");
    for row in aggregate(&result.rows) {
        println!(
            "{:<11} {:<10} {:>6} {:>6.1} -> {:<5.1} {:>6.1} -> {:<5.1}",
            row.strategy.to_string(),
            row.fusion,
            row.budget,
            row.acc_before,
            row.acc_after,
            row.f1_before,
            row.f1_after
        );
    }
    println!("{} rows, {} failed cells, reports in {}", result.rows.len(), result.failures.len(), dir.display());
    Ok(())
}
