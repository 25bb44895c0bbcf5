//! Construction and execution of single runs from a configuration.

use std::time::Instant;

use nonstat_core::analysis::{bound_nonconvex, bound_theorem1, bound_theorem2, regret_from_run, BoundConstant};
use nonstat_core::oracle::{GaussianOracle, NoiseMode};
use nonstat_core::policy::{
    first_moment_params, nonconvex_adaptive_params, theorem2_params, variance_adaptive_correction, NonconvexBaseline,
    Policy, PolicyError,
};
use nonstat_core::problem::{make_conditioned_quadratic, make_quadratic, make_smooth_nonconvex, Problem, ProblemError};
use nonstat_core::runner::{run_convex, run_nonconvex, run_variance_adaptive, RunError, RunOptions, RunRecord};
use nonstat_core::schedule::{NoiseSchedule, ScheduleError};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{
    ExperimentConfig, NoiseModeSpec, OptimizerSpec, PolicyName, ProblemKind, ProblemSpec, ScheduleKindSpec,
    ScheduleSpec,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("problem has no known smoothness constant")]
    UnknownSmoothness,
}

pub fn build_problem(spec: &ProblemSpec) -> Result<Problem, ProblemError> {
    match spec.kind {
        ProblemKind::Quadratic => make_quadratic(spec.seed, spec.dim, spec.n, spec.radius),
        ProblemKind::ConditionedQuadratic => {
            make_conditioned_quadratic(spec.seed, spec.dim, spec.n, spec.condition, spec.radius)
        }
        ProblemKind::Nonconvex => make_smooth_nonconvex(spec.dim, spec.radius, spec.seed),
    }
}

pub fn build_schedule(spec: &ScheduleSpec, horizon: usize, alpha: f64) -> Result<NoiseSchedule, ScheduleError> {
    match spec.kind {
        ScheduleKindSpec::Constant => NoiseSchedule::constant(spec.level, horizon),
        ScheduleKindSpec::PiecewiseLinear => NoiseSchedule::piecewise_linear(horizon, alpha),
        ScheduleKindSpec::AdversarialSpike => NoiseSchedule::adversarial_spike(horizon, alpha),
        ScheduleKindSpec::Custom => NoiseSchedule::from_file(spec.path.as_deref().ok_or(ScheduleError::Empty)?),
    }
}

/// A policy ready to run, with the correction `m` it uses (adaptive kinds).
#[derive(Debug, Clone)]
pub struct BuiltPolicy {
    pub policy: Policy,
    pub m: Option<f64>,
}

/// Instantiates `name` for `problem` and `schedule` with defaults from the
/// parameter formulas, then applies the overrides in `opt`.
pub fn build_policy(
    name: PolicyName,
    problem: &Problem,
    schedule: &NoiseSchedule,
    opt: &OptimizerSpec,
) -> Result<BuiltPolicy, ExperimentError> {
    let t = schedule.horizon();
    let radius = problem.radius();
    let max_level = schedule.max_level();
    if !problem.is_convex() {
        let l = problem.smoothness().ok_or(ExperimentError::UnknownSmoothness)?;
        let delta = problem.initial_gap();
        return Ok(match name {
            PolicyName::Constant => BuiltPolicy {
                policy: Policy::nonconvex_baseline(delta, l, schedule, NonconvexBaseline::Constant)?,
                m: None,
            },
            PolicyName::Idealized => BuiltPolicy {
                policy: Policy::nonconvex_baseline(delta, l, schedule, NonconvexBaseline::Idealized)?,
                m: None,
            },
            _ => {
                let p = nonconvex_adaptive_params(delta, l, max_level, t, opt.m_coeff)?;
                let c = opt.c.unwrap_or(p.c);
                let m_base = opt.m.unwrap_or(p.m - 2.0 * p.c * l).max(0.0);
                let m = variance_adaptive_correction(c, l, m_base)?;
                BuiltPolicy { policy: Policy::variance_adaptive(c, m, opt.beta.unwrap_or(p.beta), l)?, m: Some(m) }
            }
        });
    }
    let numerator = opt.c.unwrap_or(radius);
    Ok(match name {
        PolicyName::Constant => BuiltPolicy { policy: Policy::constant_baseline(numerator, schedule)?, m: None },
        PolicyName::Idealized => {
            BuiltPolicy { policy: Policy::idealized_baseline(numerator, schedule.clone())?, m: None }
        }
        PolicyName::AdaptiveFirstMoment => {
            let p = first_moment_params(radius, max_level, t)?;
            let (c, m) = (opt.c.unwrap_or(p.c), opt.m.unwrap_or(p.m));
            BuiltPolicy { policy: Policy::adaptive_first_moment(c, m, opt.beta.unwrap_or(p.beta))?, m: Some(m) }
        }
        _ => {
            let p = theorem2_params(radius, max_level, t, opt.m_coeff)?;
            let c = opt.c.unwrap_or(p.c);
            let m = opt.m.unwrap_or(p.m);
            let beta = opt.beta.unwrap_or(p.beta);
            match name {
                PolicyName::Adaptive => BuiltPolicy { policy: Policy::adaptive_second_moment(c, m, beta)?, m: Some(m) },
                PolicyName::Window => {
                    let w = opt.window.unwrap_or_else(|| (t as f64).powf(2.0 / 3.0).ceil() as usize);
                    BuiltPolicy { policy: Policy::adaptive_window(c, m, w)?, m: Some(m) }
                }
                PolicyName::Pnorm => BuiltPolicy { policy: Policy::p_norm(opt.p, c, m, beta)?, m: Some(m) },
                _ => {
                    let l = problem.smoothness().ok_or(ExperimentError::UnknownSmoothness)?;
                    let full = variance_adaptive_correction(c, l, m)?;
                    BuiltPolicy { policy: Policy::variance_adaptive(c, full, beta, l)?, m: Some(full) }
                }
            }
        }
    })
}

fn noise_mode(spec: NoiseModeSpec) -> NoiseMode {
    match spec {
        NoiseModeSpec::VarianceTarget => NoiseMode::VarianceTarget,
        NoiseModeSpec::SecondMomentProxy => NoiseMode::SecondMomentProxy,
    }
}

/// Runs `policy` with the oracle seeded by `seed`, choosing the runner that
/// matches the problem and the policy's sampling pattern.
pub fn execute(
    problem: &Problem,
    schedule: &NoiseSchedule,
    policy: Policy,
    seed: u64,
    mode: NoiseModeSpec,
    options: RunOptions,
) -> Result<RunRecord, RunError> {
    let mut oracle = GaussianOracle::with_mode(problem, schedule, seed, noise_mode(mode));
    if policy.samples_per_step() == 2 {
        run_variance_adaptive(problem, &mut oracle, policy, seed, options)
    } else if problem.is_convex() {
        run_convex(problem, &mut oracle, policy, seed, options)
    } else {
        run_nonconvex(problem, &mut oracle, policy, seed, options)
    }
}

/// The theoretical bound matching the run's output metric.
pub fn bound_for(
    name: PolicyName,
    problem: &Problem,
    schedule: &NoiseSchedule,
    record: &RunRecord,
    m: Option<f64>,
    constant: BoundConstant,
) -> Option<f64> {
    if !problem.is_convex() {
        let l = problem.smoothness()?;
        return bound_nonconvex(problem.initial_gap(), l, schedule, &record.stepsizes).ok();
    }
    match (name, m) {
        (PolicyName::Constant | PolicyName::Idealized, _) => {
            bound_theorem1(problem.radius(), schedule, &record.stepsizes).ok()
        }
        (_, Some(m)) => bound_theorem2(problem.radius(), schedule, m, constant).ok(),
        _ => None,
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub config_hash: String,
    pub policy: PolicyName,
    pub horizon: usize,
    pub alpha: f64,
    pub seed: u64,
    pub final_metric: f64,
    pub bound_value: Option<f64>,
    pub regret: Option<f64>,
    pub oracle_queries: u64,
    pub wall_time_ms: Option<f64>,
    pub failed: bool,
}

impl ResultRow {
    pub fn sort_key(&self) -> (PolicyName, usize, u64, u64) {
        (self.policy, self.horizon, self.alpha.to_bits(), self.seed)
    }
}

#[derive(Serialize)]
struct HashInput<'a> {
    problem: &'a ProblemSpec,
    schedule: &'a ScheduleSpec,
    c: Option<f64>,
    m: Option<f64>,
    beta: Option<f64>,
    p: f64,
    window: Option<usize>,
    m_coeff: f64,
    noise_mode: NoiseModeSpec,
    policy: PolicyName,
    horizon: usize,
    alpha: f64,
    seed: u64,
}

/// First 16 hex digits of SHA-256 over everything that determines one run.
pub fn run_hash(config: &ExperimentConfig, policy: PolicyName, horizon: usize, alpha: f64, seed: u64) -> String {
    let o = &config.optimizer;
    let input = HashInput {
        problem: &config.problem,
        schedule: &config.schedule,
        c: o.c,
        m: o.m,
        beta: o.beta,
        p: o.p,
        window: o.window,
        m_coeff: o.m_coeff,
        noise_mode: o.noise_mode,
        policy,
        horizon,
        alpha,
        seed,
    };
    let bytes = serde_json::to_vec(&input).expect("hash input serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A finished run with everything needed for output.
pub struct RunOutcome {
    pub row: ResultRow,
    pub record: RunRecord,
    pub schedule: NoiseSchedule,
}

/// Runs one `(policy, T, α, seed)` cell of `config`.
pub fn run_cell(
    config: &ExperimentConfig,
    problem: &Problem,
    policy_name: PolicyName,
    horizon: usize,
    alpha: f64,
    seed: u64,
) -> Result<RunOutcome, ExperimentError> {
    let started = Instant::now();
    let schedule = build_schedule(&config.schedule, horizon, alpha)?;
    let built = build_policy(policy_name, problem, &schedule, &config.optimizer)?;
    let adaptive = built.policy.needs_init();
    let options = RunOptions { record_suboptimality: config.trajectories, retain_iterates: false };
    let record = execute(problem, &schedule, built.policy, seed, config.optimizer.noise_mode, options)?;
    let constant = config.bound_constant().unwrap_or(BoundConstant::Proved);
    let bound_value = bound_for(policy_name, problem, &schedule, &record, built.m, constant);
    let regret = if adaptive { regret_from_run(&record, &schedule).ok().map(|r| r.regret) } else { None };
    let row = ResultRow {
        config_hash: run_hash(config, policy_name, schedule.horizon(), alpha, seed),
        policy: policy_name,
        horizon: schedule.horizon(),
        alpha,
        seed,
        final_metric: record.final_metric,
        bound_value,
        regret,
        oracle_queries: record.oracle_queries,
        wall_time_ms: config.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
        failed: !record.is_completed(),
    };
    Ok(RunOutcome { row, record, schedule })
}
