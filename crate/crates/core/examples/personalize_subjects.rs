//! Train a group model, then adapt it to each test subject with labels
//! chosen by the learned policy.

use mmal::datagen::{generate, GeneratorConfig};
use mmal::models::ClassifierConfig;
use mmal::personalize::{mean_metrics, personalize_repeated, Querier};
use mmal::trainer::{run_mmql, TrainConfig};

fn main() -> anyhow::Result<()> {
    let data = generate(&GeneratorConfig {
        seed: 8,
        subject_shift: 1.5,
        noise_scale: 3.0,
        ..GeneratorConfig::desk()
    })?
    .normalized()?
    .0;
    let budget = 10;
    let cfg = TrainConfig {
        episodes: 20,
        budget,
        classifier: ClassifierConfig {
            hidden: 32,
            learning_rate: 0.005,
            ..ClassifierConfig::default()
        },
        seed: 2,
        ..TrainConfig::default()
    };
    let out = run_mmql(&data, &cfg)?;
    let q = out.policy.as_ref().expect("mmql trains a policy");
    let querier = Querier::Policy {
        q,
        mode: cfg.state_mode,
    };

    for session in &data.test {
        let results = personalize_repeated(session, &out.ensemble, querier, budget, 10, 5, 99)?;
        let used: usize = results.iter().map(|r| r.budget_used).sum();
        match mean_metrics(&results) {
            Some([ab, aa, fb, fa]) => println!(
                "subject {:>2}: ACC {ab:5.1} -> {aa:5.1}  F1 {fb:5.1} -> {fa:5.1}  labels/run {:.1}",
                session.subject,
                used as f64 / results.len() as f64
            ),
            None => println!("subject {:>2}: nothing left to evaluate", session.subject),
        }
    }
    Ok(())
}
