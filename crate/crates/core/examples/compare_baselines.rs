//! Random and uncertainty sampling against the learned policy at one budget.

use mmal::datagen::{generate, GeneratorConfig};
use mmal::fusion::FusionMode;
use mmal::harness::{querier_for, train_cell, Cell, Strategy};
use mmal::models::ClassifierConfig;
use mmal::personalize::{mean_metrics, personalize_repeated};
use mmal::trainer::TrainConfig;

fn main() -> anyhow::Result<()> {
    let data = generate(&GeneratorConfig {
        seed: 21,
        subject_shift: 1.5,
        noise_scale: 3.0,
        ..GeneratorConfig::desk()
    })?
    .normalized()?
    .0;
    let base = TrainConfig {
        episodes: 15,
        classifier: ClassifierConfig {
            hidden: 32,
            learning_rate: 0.005,
            ..ClassifierConfig::default()
        },
        ..TrainConfig::default()
    };
    for strategy in [Strategy::MmqlCont0, Strategy::Rnd, Strategy::Unc] {
        let cell = Cell {
            strategy,
            fusion: FusionMode::ModelLevel,
            budget: 10,
            repeat: 0,
        };
        let out = train_cell(&data, &base, &cell, 7)?;
        let querier = querier_for(strategy, &out)?;
        let mut results = Vec::new();
        for session in &data.test {
            results.extend(personalize_repeated(session, &out.ensemble, querier, cell.budget, 10, 3, 7)?);
        }
        let [ab, aa, fb, fa] = mean_metrics(&results).expect("non-empty evaluation");
        println!(
            "{:<11} train scanned {:>6.1}  ACC {ab:5.1} -> {aa:5.1}  F1 {fb:5.1} -> {fa:5.1}",
            strategy.to_string(),
            out.mean_scanned()
        );
    }
    Ok(())
}
