use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
strategies = ["mmql-cont0", "rnd"]
fusions = ["model-f"]
budgets = [3]
repeats = 2
personalization_repeats = 2
personalization_epochs = 2

[generator]
windows_per_subject = 20

[train]
episodes = 2
epochs_per_episode = 2

[train.classifier]
hidden = 6

[train.q]
hidden = 6
"#;

fn mmal(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmal"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MMAL_OUT_DIR")
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = mmal(args, cwd);
    assert!(
        out.status.success(),
        "mmal {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    ok(&["generate", "--config", "tiny.toml", "--out", "data", "--seed", "4"], dir.path());
    dir
}

#[test]
fn train_is_deterministic() {
    let dir = setup();
    let d = dir.path();
    for out in ["m1", "m2"] {
        ok(
            &["train", "--data", "data", "--out", out, "--config", "tiny.toml", "--strategy", "mmql-cont0", "--budget", "5", "--seed", "7"],
            d,
        );
    }
    for file in ["ensemble.json", "policy.json", "episodes.jsonl", "meta.json"] {
        assert_eq!(fs::read(d.join("m1").join(file)).unwrap(), fs::read(d.join("m2").join(file)).unwrap(), "{file}");
    }
    let logs = fs::read_to_string(d.join("m1/episodes.jsonl")).unwrap();
    assert_eq!(logs.lines().count(), 2);
}

#[test]
fn zero_budget_personalization_matches_evaluate() {
    let dir = setup();
    let d = dir.path();
    ok(&["train", "--data", "data", "--out", "m", "--config", "tiny.toml", "--strategy", "unc", "--budget", "3"], d);
    ok(&["personalize", "--data", "data", "--model", "m", "--out", "p", "--budget", "0", "--repeats", "3"], d);
    ok(&["evaluate", "--data", "data", "--model", "m", "--out", "e"], d);
    assert_eq!(fs::read(d.join("p/summary.json")).unwrap(), fs::read(d.join("e/summary.json")).unwrap());

    ok(&["personalize", "--data", "data", "--model", "m", "--out", "q", "--budget", "3", "--repeats", "2"], d);
    let results = fs::read_to_string(d.join("q/results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 8);
    for line in results.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["budget_used"].as_u64().unwrap() <= 3);
    }
}

#[test]
fn report_writes_one_row_per_cell_and_subject() {
    let dir = setup();
    let d = dir.path();
    ok(&["report", "--config", "tiny.toml", "--out", "rep"], d);
    let rows = fs::read_to_string(d.join("rep/rows.csv")).unwrap();
    // header + 2 strategies x 1 budget x 2 repeats x 4 subjects
    assert_eq!(rows.lines().count(), 1 + 16);
    for name in ["aggregate.csv", "fig2_scanned.json", "fig3_budget_curves.json", "fig4_subjects.json", "budget_law.json"] {
        assert!(d.join("rep").join(name).exists(), "{name}");
    }
    let law: serde_json::Value = serde_json::from_slice(&fs::read(d.join("rep/budget_law.json")).unwrap()).unwrap();
    assert_eq!(law["violations"], 0);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = setup();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_mmal"))
        .args(["report", "--config", "tiny.toml"])
        .current_dir(d)
        .env("MMAL_OUT_DIR", d.join("from-env"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("from-env/rows.csv").exists());
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = setup();
    let d = dir.path();
    let out = mmal(&["train", "--data", "missing", "--out", "m"], d);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("missing"));

    let out = mmal(&["train", "--data", "data", "--out", "m", "--strategy", "greedy"], d);
    assert!(!out.status.success());
    let out = mmal(&["personalize", "--bogus"], d);
    assert!(!out.status.success());
    let out = mmal(&["frobnicate"], d);
    assert!(!out.status.success());

    fs::write(d.join("bad.toml"), "budgets = []\n").unwrap();
    let out = mmal(&["report", "--config", "bad.toml", "--out", "x"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-empty"));
}
