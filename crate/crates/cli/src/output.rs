//! CSV and JSON emission.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::experiment::{ResultRow, RunOutcome};

pub const RESULTS_HEADER: [&str; 10] = [
    "config_hash",
    "policy",
    "T",
    "alpha",
    "seed",
    "final_metric",
    "bound_value",
    "regret",
    "oracle_queries",
    "wall_time_ms",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> io::Result<()> {
    write_results_to(BufWriter::new(File::create(path)?), rows)
}

/// Writes `results.csv` content to any sink.
pub fn write_results_to<W: Write>(sink: W, rows: &[ResultRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.config_hash.clone(),
            r.policy.as_str().to_string(),
            r.horizon.to_string(),
            r.alpha.to_string(),
            r.seed.to_string(),
            r.final_metric.to_string(),
            opt(r.bound_value),
            opt(r.regret),
            r.oracle_queries.to_string(),
            opt(r.wall_time_ms),
        ])?;
    }
    w.flush()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Per `(policy, T, α)` medians over seeds. `rows` must be sorted.
pub fn write_summary(path: &Path, rows: &[ResultRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy", "T", "alpha", "runs", "failed", "median_final_metric", "median_bound_value"])?;
    for group in rows.chunk_by(|a, b| a.policy == b.policy && a.horizon == b.horizon && a.alpha == b.alpha) {
        let mut finals: Vec<f64> = group.iter().map(|r| r.final_metric).collect();
        let mut bounds: Vec<f64> = group.iter().filter_map(|r| r.bound_value).collect();
        w.write_record([
            group[0].policy.as_str().to_string(),
            group[0].horizon.to_string(),
            group[0].alpha.to_string(),
            group.len().to_string(),
            group.iter().filter(|r| r.failed).count().to_string(),
            opt(median(&mut finals)),
            opt(median(&mut bounds)),
        ])?;
    }
    w.flush()
}

/// Columns `k, eta, suboptimality_or_gradnormsq, estimator_value, true_level`.
pub fn write_trajectory(path: &Path, outcome: &RunOutcome) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "k,eta,suboptimality_or_gradnormsq,estimator_value,true_level")?;
    let r = &outcome.record;
    let metric = r.suboptimality.as_ref().unwrap_or(&r.grad_norm_sq);
    for (i, &eta) in r.stepsizes.iter().enumerate() {
        let est = r.estimator_trace.as_ref().and_then(|t| t.get(i)).map(|v| v.to_string()).unwrap_or_default();
        let m = metric.get(i).map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", i + 1, eta, m, est, outcome.schedule.level(i + 1))?;
    }
    w.flush()
}
