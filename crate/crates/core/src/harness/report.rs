use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridResult, ReportRow, Strategy};
use crate::datagen::SubjectId;
use crate::error::Result;

/// Means over the rows of one (strategy, fusion, budget) group, or over
/// all budgets when `budget == "all"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: Strategy,
    pub fusion: String,
    pub budget: String,
    pub rows: usize,
    pub acc_before: f64,
    pub acc_after: f64,
    pub f1_before: f64,
    pub f1_after: f64,
    pub scanned_train: f64,
    pub scanned_personalize: f64,
}

/// Metric-versus-budget curves for one strategy and fusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetCurve {
    pub strategy: Strategy,
    pub fusion: String,
    pub budgets: Vec<usize>,
    pub acc_before: Vec<f64>,
    pub acc_after: Vec<f64>,
    pub f1_before: Vec<f64>,
    pub f1_after: Vec<f64>,
}

/// Mean windows scanned per training episode, per budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScannedSeries {
    pub strategy: Strategy,
    pub fusion: String,
    pub budgets: Vec<usize>,
    pub scanned: Vec<f64>,
}

/// Per-subject accuracy before and after adaptation, averaged over budgets
/// and repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectBars {
    pub strategy: Strategy,
    pub fusion: String,
    pub subjects: Vec<SubjectId>,
    pub acc_before: Vec<f64>,
    pub acc_after: Vec<f64>,
}

fn mean(rows: &[&ReportRow], f: impl Fn(&ReportRow) -> f64) -> f64 {
    rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
}

/// Rows grouped by (strategy, fusion) in order of first appearance.
fn groups(rows: &[ReportRow]) -> Vec<((Strategy, String), Vec<&ReportRow>)> {
    let mut out: Vec<((Strategy, String), Vec<&ReportRow>)> = Vec::new();
    for r in rows {
        let key = (r.strategy, r.fusion.clone());
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => out.push((key, vec![r])),
        }
    }
    out
}

fn by_budget<'a>(rows: &[&'a ReportRow]) -> BTreeMap<usize, Vec<&'a ReportRow>> {
    let mut map: BTreeMap<usize, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        map.entry(r.budget).or_default().push(r);
    }
    map
}

fn aggregate_row(strategy: Strategy, fusion: &str, budget: String, rows: &[&ReportRow]) -> AggregateRow {
    AggregateRow {
        strategy,
        fusion: fusion.to_string(),
        budget,
        rows: rows.len(),
        acc_before: mean(rows, |r| r.acc_before),
        acc_after: mean(rows, |r| r.acc_after),
        f1_before: mean(rows, |r| r.f1_before),
        f1_after: mean(rows, |r| r.f1_after),
        scanned_train: mean(rows, |r| r.scanned_train),
        scanned_personalize: mean(rows, |r| r.scanned_personalize),
    }
}

/// Per-budget means followed by an "all" row for every (strategy, fusion).
pub fn aggregate(rows: &[ReportRow]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for ((strategy, fusion), group) in groups(rows) {
        for (budget, sub) in by_budget(&group) {
            out.push(aggregate_row(strategy, &fusion, budget.to_string(), &sub));
        }
        out.push(aggregate_row(strategy, &fusion, "all".into(), &group));
    }
    out
}

pub fn budget_curves(rows: &[ReportRow]) -> Vec<BudgetCurve> {
    groups(rows)
        .into_iter()
        .map(|((strategy, fusion), group)| {
            let per = by_budget(&group);
            BudgetCurve {
                strategy,
                fusion,
                budgets: per.keys().copied().collect(),
                acc_before: per.values().map(|v| mean(v, |r| r.acc_before)).collect(),
                acc_after: per.values().map(|v| mean(v, |r| r.acc_after)).collect(),
                f1_before: per.values().map(|v| mean(v, |r| r.f1_before)).collect(),
                f1_after: per.values().map(|v| mean(v, |r| r.f1_after)).collect(),
            }
        })
        .collect()
}

pub fn scanned_series(rows: &[ReportRow]) -> Vec<ScannedSeries> {
    groups(rows)
        .into_iter()
        .map(|((strategy, fusion), group)| {
            let per = by_budget(&group);
            ScannedSeries {
                strategy,
                fusion,
                budgets: per.keys().copied().collect(),
                scanned: per.values().map(|v| mean(v, |r| r.scanned_train)).collect(),
            }
        })
        .collect()
}

pub fn subject_bars(rows: &[ReportRow]) -> Vec<SubjectBars> {
    groups(rows)
        .into_iter()
        .map(|((strategy, fusion), group)| {
            let mut per: BTreeMap<SubjectId, Vec<&ReportRow>> = BTreeMap::new();
            for r in group {
                per.entry(r.subject).or_default().push(r);
            }
            SubjectBars {
                strategy,
                fusion,
                subjects: per.keys().copied().collect(),
                acc_before: per.values().map(|v| mean(v, |r| r.acc_before)).collect(),
                acc_after: per.values().map(|v| mean(v, |r| r.acc_after)).collect(),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct BudgetLaw<'a> {
    violations: usize,
    max_episode_labels: &'a [(usize, usize)],
    max_personalization_labels: &'a [(usize, usize)],
}

/// Writes `rows.csv`, `aggregate.csv`, `failures.json`, `budget_law.json`
/// and the plot series `fig2_scanned.json`, `fig3_budget_curves.json`,
/// `fig4_subjects.json` into `dir`.
pub fn write_reports(dir: &Path, result: &GridResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("rows.csv"), &result.rows)?;
    write_csv(&dir.join("aggregate.csv"), &aggregate(&result.rows))?;
    write_json(&dir.join("failures.json"), &result.failures)?;
    write_json(
        &dir.join("budget_law.json"),
        &BudgetLaw {
            violations: result.budget_violations(),
            max_episode_labels: &result.max_episode_labels,
            max_personalization_labels: &result.max_personalization_labels,
        },
    )?;
    write_json(&dir.join("fig2_scanned.json"), &scanned_series(&result.rows))?;
    write_json(&dir.join("fig3_budget_curves.json"), &budget_curves(&result.rows))?;
    write_json(&dir.join("fig4_subjects.json"), &subject_bars(&result.rows))?;
    Ok(())
}
