//! Raw series tables. Every reported number is recomputed from these files.

use std::path::Path;

use anyhow::{Context, Result};
use mazelab_core::eval::EvalEpisode;
use mazelab_core::experiment::ComparisonReport;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const ROBUST: &str = "robust";
pub const NONROBUST: &str = "nonrobust";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// One fine-tuning run of the comparison. An empty `steps_to_criterion`
/// means the run was censored at `budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub arm: String,
    pub seed: u64,
    pub steps_to_criterion: Option<u64>,
    pub budget: u64,
}

/// Greedy success of both pretrained policies on one unseen domain draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub domain: usize,
    pub robust: f64,
    pub nonrobust: f64,
}

/// Comparison with `a` = robust and `b` = nonrobust, so `ratio()` is
/// nonrobust over robust.
pub fn report_from_rows(rows: &[CompareRow]) -> Result<ComparisonReport> {
    let arm = |name: &str| -> Vec<&CompareRow> { rows.iter().filter(|r| r.arm == name).collect() };
    let (a, b) = (arm(ROBUST), arm(NONROBUST));
    anyhow::ensure!(!a.is_empty() && !b.is_empty(), "comparison table needs both arms");
    let budget = rows[0].budget;
    anyhow::ensure!(rows.iter().all(|r| r.budget == budget), "runs use different budgets");
    let steps = |v: &[&CompareRow]| v.iter().map(|r| r.steps_to_criterion).collect();
    Ok(ComparisonReport::new(
        a.iter().map(|r| r.seed).collect(),
        budget,
        (ROBUST.into(), steps(&a)),
        (NONROBUST.into(), steps(&b)),
    ))
}

pub fn write_eval(path: &Path, episodes: &[EvalEpisode]) -> Result<()> {
    write_csv(path, episodes)
}

/// Median over domains of the per-domain difference robust − nonrobust.
pub fn probe_median_gap(rows: &[ProbeRow]) -> f64 {
    let mut d: Vec<f64> = rows.iter().map(|r| r.robust - r.nonrobust).collect();
    d.sort_by(f64::total_cmp);
    match d.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => d[n / 2],
        n => 0.5 * (d[n / 2 - 1] + d[n / 2]),
    }
}
