use std::fs;
use std::path::Path;

use mmal::harness::{aggregate, run_grid, write_reports, ExperimentConfig, Strategy};

fn tiny(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: 5,
        strategies: vec![Strategy::MmqlCont0, Strategy::Rnd],
        fusions: vec!["model-f".into()],
        budgets: vec![3, 5],
        repeats: 3,
        personalization_repeats: 2,
        personalization_epochs: 2,
        output_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.generator.windows_per_subject = 24;
    cfg.train.episodes = 2;
    cfg.train.epochs_per_episode = 2;
    cfg.train.classifier.hidden = 6;
    cfg.train.q.hidden = 6;
    cfg
}

#[test]
fn row_count_is_the_product_of_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_grid(&tiny(dir.path())).unwrap();
    assert!(result.failures.is_empty());
    // 2 strategies x 2 budgets x 3 repeats x 4 test subjects
    assert_eq!(result.rows.len(), 48);
    assert_eq!(result.budget_violations(), 0);
    for row in &result.rows {
        assert!(row.labels_used <= row.budget as f64);
        for v in [row.acc_before, row.acc_after, row.f1_before, row.f1_after] {
            assert!((0.0..=100.0).contains(&v));
        }
    }
    for (budget, used) in result.max_episode_labels.iter().chain(&result.max_personalization_labels) {
        assert!(used <= budget);
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let cfg = tiny(dir);
        write_reports(dir, &run_grid(&cfg).unwrap()).unwrap();
    }
    for name in ["rows.csv", "aggregate.csv", "fig2_scanned.json", "fig3_budget_curves.json", "fig4_subjects.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn removing_a_budget_only_removes_its_rows() {
    let dir = tempfile::tempdir().unwrap();
    let full = run_grid(&tiny(dir.path())).unwrap();
    let mut cfg = tiny(dir.path());
    cfg.budgets = vec![5];
    let reduced = run_grid(&cfg).unwrap();
    let kept: Vec<_> = full.rows.iter().filter(|r| r.budget == 5).cloned().collect();
    assert_eq!(reduced.rows, kept);
}

#[test]
fn aggregate_equals_mean_of_rows() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_grid(&tiny(dir.path())).unwrap();
    for agg in aggregate(&result.rows) {
        let rows: Vec<_> = result
            .rows
            .iter()
            .filter(|r| r.strategy == agg.strategy && r.fusion == agg.fusion)
            .filter(|r| agg.budget == "all" || r.budget.to_string() == agg.budget)
            .collect();
        assert_eq!(rows.len(), agg.rows);
        let mean = rows.iter().map(|r| r.acc_after).sum::<f64>() / rows.len() as f64;
        assert!((mean - agg.acc_after).abs() < 1e-9);
        let mean = rows.iter().map(|r| r.f1_before).sum::<f64>() / rows.len() as f64;
        assert!((mean - agg.f1_before).abs() < 1e-9);
    }
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 3);
}

#[test]
fn invalid_grids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.strategies.clear();
    assert!(run_grid(&cfg).is_err());
    let mut cfg = tiny(dir.path());
    cfg.budgets = vec![0];
    assert!(run_grid(&cfg).is_err());
}
