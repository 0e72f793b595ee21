//! Jointly train the modality classifiers and the query policy on the
//! training subjects, printing one line per episode.

use mmal::datagen::{generate, GeneratorConfig};
use mmal::models::ClassifierConfig;
use mmal::trainer::{run_mmql, TrainConfig};

fn main() -> anyhow::Result<()> {
    let data = generate(&GeneratorConfig {
        seed: 3,
        ..GeneratorConfig::desk()
    })?
    .normalized()?
    .0;
    let cfg = TrainConfig {
        episodes: 12,
        budget: 10,
        classifier: ClassifierConfig {
            hidden: 32,
            ..ClassifierConfig::default()
        },
        seed: 1,
        ..TrainConfig::default()
    };
    let out = run_mmql(&data, &cfg)?;
    for log in &out.logs {
        let bellman = log.mean_bellman_loss.map_or("-".to_string(), |l| format!("{l:.4}"));
        println!(
            "episode {:>2}  eps {:.2}  scanned {:>3}  labels {:>2} {:?}  reward {:>7.2}  bellman {bellman}",
            log.episode, log.epsilon, log.scanned, log.labels, log.label_counts, log.cumulative_reward
        );
    }
    println!(
        "{} terminal transitions, mean scanned {:.1}",
        out.terminal_transitions,
        out.mean_scanned()
    );
    Ok(())
}
