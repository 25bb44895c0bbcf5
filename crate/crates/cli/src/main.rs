use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use nonstat_opt::config::{ExperimentConfig, Overrides, ScheduleKindSpec};
use nonstat_opt::experiment::build_schedule;
use nonstat_opt::suites::{run_suite, CriterionReport, VerifyOptions, SUITES};
use nonstat_opt::sweep::{resolve_workers, run_sweep, write_sweep, SweepError};

#[derive(Parser)]
#[command(name = "nonstat-opt", version, about = "SGD under time-varying gradient noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured grid and write per-run trajectories.
    Run(Common),
    /// Run the configured (policy × T × α × seed) grid.
    Sweep(Common),
    /// Execute verification suites and write `verify_report.json`.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Suite name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Write the noise schedule as `k,level` to `<out>/schedule.csv`.
    ScheduleDump(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    num_seeds: Option<u64>,
    /// Defaults to `NONSTAT_OPT_WORKERS`, then the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,
    #[arg(long = "T", value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    m_coeff: Option<f64>,
    #[arg(long)]
    bound_const: Option<u32>,
    #[arg(long)]
    trajectories: bool,
    /// Record wall time per run (makes output nondeterministic).
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn config(&self, force_trajectories: bool) -> Result<ExperimentConfig, SweepError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        config.apply(&Overrides {
            out: self.out.clone(),
            seed: self.seed,
            num_seeds: self.num_seeds,
            policies: self.policy.clone(),
            horizons: self.horizons.clone(),
            alphas: self.alpha.clone(),
            m_coeff: self.m_coeff,
            bound_const: self.bound_const,
            trajectories: self.trajectories || force_trajectories,
            timing: self.timing,
        });
        config.validate()?;
        Ok(config)
    }
}

fn sweep(common: &Common, trajectories: bool) -> Result<ExitCode, SweepError> {
    let config = common.config(trajectories)?;
    let rows = run_sweep(&config, resolve_workers(common.workers))?;
    write_sweep(&config.out, &rows)?;
    let failed = rows.iter().filter(|r| r.failed).count();
    info!("wrote {} rows to {}", rows.len(), config.out.display());
    if failed > 0 {
        error!("{failed} runs failed");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(common: &Common, suite: &str) -> Result<ExitCode, SweepError> {
    let config = common.config(false)?;
    let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite] };
    let options = VerifyOptions {
        alpha: common.alpha.as_ref().and_then(|a| a.first().copied()),
        horizons: common.horizons.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(resolve_workers(common.workers)).build()?;
    let mut reports: Vec<CriterionReport> = Vec::new();
    for name in names {
        let report = pool
            .install(|| run_suite(name, &options))
            .ok_or_else(|| nonstat_opt::config::ConfigError::Invalid(format!("unknown suite `{name}`")))?;
        println!("{}", report.summary_line());
        reports.push(report);
    }
    std::fs::create_dir_all(&config.out)?;
    let path = config.out.join("verify_report.json");
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    std::fs::write(&path, json + "\n")?;
    info!("wrote {}", path.display());
    Ok(if reports.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn schedule_dump(common: &Common) -> Result<ExitCode, SweepError> {
    let config = common.config(false)?;
    std::fs::create_dir_all(&config.out)?;
    let horizon = config.horizons[0];
    let alpha = config.alphas[0];
    let schedule =
        build_schedule(&config.schedule, horizon, alpha).map_err(nonstat_opt::experiment::ExperimentError::from)?;
    let name = match config.schedule.kind {
        ScheduleKindSpec::Custom => "schedule.csv".to_string(),
        _ => format!("schedule_T{}_alpha{alpha}.csv", schedule.horizon()),
    };
    write_schedule(&config.out.join(name), schedule.levels())?;
    Ok(ExitCode::SUCCESS)
}

fn write_schedule(path: &Path, levels: impl Iterator<Item = f64>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "level"])?;
    for (i, level) in levels.enumerate() {
        w.write_record([(i + 1).to_string(), level.to_string()])?;
    }
    w.flush()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => sweep(common, true),
        Command::Sweep(common) => sweep(common, false),
        Command::Verify { common, suite } => verify(common, suite),
        Command::ScheduleDump(common) => schedule_dump(common),
    };
    result.unwrap_or_else(|e| {
        error!("{e}");
        ExitCode::from(e.exit_code())
    })
}
