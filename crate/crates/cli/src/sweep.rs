//! Parallel execution of `(policy × T × α × seed)` grids.

use std::path::Path;

use log::info;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ScheduleKindSpec};
use crate::experiment::{build_problem, build_schedule, run_cell, ExperimentError, ResultRow};
use crate::output::{write_results, write_summary, write_trajectory};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {policy} T={horizon} alpha={alpha} seed={seed}: {source}")]
    Cell { policy: &'static str, horizon: usize, alpha: f64, seed: u64, source: ExperimentError },
    #[error("setup: {0}")]
    Setup(#[from] ExperimentError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl SweepError {
    /// Process exit code: configuration problems are 2, anything else 1.
    pub fn exit_code(&self) -> u8 {
        match self {
            SweepError::Config(_) | SweepError::Setup(_) | SweepError::Cell { .. } => 2,
            _ => 1,
        }
    }
}

/// Worker count: explicit value, else `NONSTAT_OPT_WORKERS`, else all cores.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("NONSTAT_OPT_WORKERS").ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs every cell of `config`, writing trajectories as they finish when
/// enabled. Rows come back sorted by `(policy, T, α, seed)`.
pub fn run_sweep(config: &ExperimentConfig, workers: usize) -> Result<Vec<ResultRow>, SweepError> {
    config.validate()?;
    let problem = build_problem(&config.problem).map_err(ExperimentError::from)?;
    let horizons = if config.schedule.kind == ScheduleKindSpec::Custom {
        vec![build_schedule(&config.schedule, 0, 0.0).map_err(ExperimentError::from)?.horizon()]
    } else {
        config.horizons.clone()
    };
    let mut cells = Vec::new();
    for policy in config.policies()? {
        for &t in &horizons {
            for &alpha in &config.alphas {
                for &seed in &config.seeds {
                    cells.push((policy, t, alpha, seed));
                }
            }
        }
    }
    info!("running {} cells on {workers} workers", cells.len());
    if config.trajectories {
        std::fs::create_dir_all(&config.out)?;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let results: Vec<Result<ResultRow, SweepError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(policy, horizon, alpha, seed)| {
                let outcome = run_cell(config, &problem, policy, horizon, alpha, seed)
                    .map_err(|source| SweepError::Cell { policy: policy.as_str(), horizon, alpha, seed, source })?;
                if config.trajectories {
                    let path = config.out.join(format!("trajectory_{}.csv", outcome.row.config_hash));
                    write_trajectory(&path, &outcome)?;
                }
                Ok(outcome.row)
            })
            .collect()
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    rows.sort_by_key(ResultRow::sort_key);
    Ok(rows)
}

/// Writes `results.csv` and `summary.csv` into `dir`.
pub fn write_sweep(dir: &Path, rows: &[ResultRow]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results(&dir.join("results.csv"), rows)?;
    write_summary(&dir.join("summary.csv"), rows)
}
