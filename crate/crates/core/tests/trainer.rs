use mmal::datagen::{generate, Dataset, GeneratorConfig};
use mmal::models::ClassifierConfig;
use mmal::policy::{BaselineStrategy, EpsilonSchedule, StateMode};
use mmal::trainer::{run_baseline, run_mmql, TrainConfig};

fn data(seed: u64) -> Dataset {
    generate(&GeneratorConfig {
        train_subjects: 3,
        test_subjects: 1,
        windows_per_subject: 20,
        seed,
        ..GeneratorConfig::desk()
    })
    .unwrap()
    .normalized()
    .unwrap()
    .0
}

fn cfg(budget: usize) -> TrainConfig {
    TrainConfig {
        episodes: 3,
        epochs_per_episode: 2,
        budget,
        classifier: ClassifierConfig {
            hidden: 6,
            ..ClassifierConfig::default()
        },
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_models_and_logs() {
    let d = data(1);
    for mode in [StateMode::Cont0, StateMode::Cont1] {
        let c = TrainConfig {
            state_mode: mode,
            ..cfg(5)
        };
        let a = run_mmql(&d, &c).unwrap();
        let b = run_mmql(&d, &c).unwrap();
        assert_eq!(a.ensemble, b.ensemble);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.logs, b.logs);
    }
}

#[test]
fn episodes_respect_the_budget() {
    let d = data(2);
    for budget in [1, 5, 20] {
        let out = run_mmql(&d, &cfg(budget)).unwrap();
        for log in &out.logs {
            assert!(log.labels <= budget);
            assert!(log.scanned >= log.labels);
            assert_eq!(log.labels, log.label_counts.iter().sum::<usize>());
            assert_eq!(log.terminal, log.labels == budget);
        }
        for strategy in [BaselineStrategy::Rnd, BaselineStrategy::Unc] {
            let out = run_baseline(&d, &cfg(budget), strategy).unwrap();
            assert!(out.logs.iter().all(|l| l.labels <= budget));
        }
    }
}

#[test]
fn full_exploration_scans_the_whole_stream_when_the_budget_covers_it() {
    let d = data(3);
    let n: usize = d.train.iter().map(|s| s.len()).sum();
    let c = TrainConfig {
        episodes: 1,
        exploration: EpsilonSchedule::constant(1.0),
        ..cfg(n)
    };
    let out = run_mmql(&d, &c).unwrap();
    let log = &out.logs[0];
    assert_eq!(log.scanned, n);
    assert!(log.labels <= n);
    let c = TrainConfig {
        exploration: EpsilonSchedule::constant(1.0),
        ..cfg(5)
    };
    // with exploration every window has an even chance of a label request
    let out = run_mmql(&d, &c).unwrap();
    assert!(out.logs.iter().all(|l| l.labels == 5 && l.terminal));
}
