//! Verification suites, one per acceptance criterion.
//!
//! Each suite returns a [`CriterionReport`] listing every measured quantity,
//! its limit, and whether it held. A criterion passes when all of its
//! measurements pass.

use std::time::Instant;

use nonstat_core::analysis::{
    bound_constant, bound_idealized, bound_nonconvex, bound_theorem1, bound_theorem2, fit_slope, regret_bound,
    BoundConstant,
};
use nonstat_core::estimator::{default_beta, regret, EstimatorState};
use nonstat_core::oracle::{GaussianOracle, StochasticOracle};
use nonstat_core::policy::theorem2_params;
use nonstat_core::problem::{make_conditioned_quadratic, make_quadratic, make_smooth_nonconvex, Problem};
use nonstat_core::runner::RunRecord;
use nonstat_core::schedule::NoiseSchedule;
use nonstat_core::vector::{dist_sq, norm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, NoiseModeSpec, OptimizerSpec, PolicyName, ProblemKind};
use crate::experiment::{build_policy, execute};
use crate::output::{median, write_results_to};
use crate::sweep::run_sweep;

#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    /// `"<="`, `">="` or `"=="`.
    pub relation: &'static str,
    pub limit: f64,
    pub passed: bool,
}

impl Measurement {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, relation: "<=", limit, passed: value <= limit }
    }

    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, relation: ">=", limit, passed: value >= limit }
    }

    fn equals(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, relation: "==", limit, passed: value == limit }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: &'static str,
    pub suite: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    /// Values reported for information only.
    pub notes: Vec<String>,
    pub elapsed_s: f64,
}

impl CriterionReport {
    fn new(id: &'static str, suite: &'static str, title: &'static str) -> Self {
        Self { id, suite, title, passed: false, measurements: Vec::new(), notes: Vec::new(), elapsed_s: 0.0 }
    }

    fn check(&mut self, m: Measurement) {
        self.measurements.push(m);
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn finish(mut self, started: Instant, runtime_limit_s: f64) -> Self {
        self.elapsed_s = started.elapsed().as_secs_f64();
        self.check(Measurement::at_most("runtime_s", self.elapsed_s, runtime_limit_s));
        self.passed = self.measurements.iter().all(|m| m.passed);
        self
    }

    /// Names of the failed measurements.
    pub fn failures(&self) -> Vec<&str> {
        self.measurements.iter().filter(|m| !m.passed).map(|m| m.name.as_str()).collect()
    }

    /// One line: `A1 PASS jensen ...`.
    pub fn summary_line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let failed = self.failures();
        let tail = if failed.is_empty() { String::new() } else { format!(" [failed: {}]", failed.join(", ")) };
        format!("{} {status} {} ({:.1}s) {}{tail}", self.id, self.suite, self.elapsed_s, self.title)
    }
}

/// Overrides for suite parameters.
#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Noise exponent of the `rates` suite.
    pub alpha: Option<f64>,
    /// Horizons of the `rates` and `regret` suites.
    pub horizons: Option<Vec<usize>>,
}

pub const SUITES: [&str; 10] = [
    "jensen",
    "regret",
    "rates",
    "ordering",
    "theorem1",
    "theorem2",
    "adversarial",
    "nonconvex",
    "accounting",
    "gradients",
];

/// Runs a suite by name; `None` for an unknown name.
pub fn run_suite(name: &str, options: &VerifyOptions) -> Option<CriterionReport> {
    Some(match name {
        "jensen" => jensen(),
        "regret" => regret_suite(options),
        "rates" => rates(options),
        "ordering" => ordering(),
        "theorem1" => theorem1(),
        "theorem2" => theorem2(),
        "adversarial" => adversarial(),
        "nonconvex" => nonconvex(),
        "accounting" => accounting(),
        "gradients" => gradients(),
        _ => return None,
    })
}

/// The quadratic used by the rate and ordering experiments: dimension 50,
/// Hessian eigenvalues log-spaced on `[1e-4, 1]`, `R = 1`.
pub fn rate_problem() -> Problem {
    make_conditioned_quadratic(0, 50, 100, 1e4, 1.0).expect("valid problem")
}

fn run(problem: &Problem, schedule: &NoiseSchedule, name: PolicyName, opt: &OptimizerSpec, seed: u64) -> RunRecord {
    let built = build_policy(name, problem, schedule, opt).expect("valid policy");
    execute(problem, schedule, built.policy, seed, NoiseModeSpec::SecondMomentProxy, Default::default())
        .expect("run executes")
}

fn finals(problem: &Problem, schedule: &NoiseSchedule, name: PolicyName, opt: &OptimizerSpec, seeds: u64) -> Vec<f64> {
    (0..seeds).into_par_iter().map(|seed| run(problem, schedule, name, opt, seed).final_metric).collect()
}

fn med(mut v: Vec<f64>) -> f64 {
    median(&mut v).unwrap_or(f64::NAN)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// A1: idealized-baseline bound never exceeds the constant-baseline bound,
/// with equality exactly on constant schedules.
pub fn jensen() -> CriterionReport {
    let started = Instant::now();
    let mut report =
        CriterionReport::new("A1", "jensen", "idealized bound <= constant bound; equality only on constant schedules");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut schedules: Vec<(NoiseSchedule, bool)> = (0..100)
        .map(|_| {
            let len = rng.random_range(2..=500);
            let levels: Vec<f64> = (0..len).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect();
            (NoiseSchedule::custom(levels).expect("positive levels"), false)
        })
        .collect();
    for alpha in [0.0, 0.05, 0.3] {
        schedules.push((NoiseSchedule::piecewise_linear(10_000, alpha).expect("valid"), alpha == 0.0));
    }
    for level in [0.1, 1.0, 7.5] {
        schedules.push((NoiseSchedule::constant(level, 777).expect("valid"), true));
    }
    let (mut worst_excess, mut ordered, mut equal_on_constant, mut strict_elsewhere) = (f64::NEG_INFINITY, 0, 0, 0);
    let constant_count = schedules.iter().filter(|s| s.1).count();
    for (s, is_constant) in &schedules {
        let c = bound_constant(1.0, s);
        let i = bound_idealized(1.0, s).expect("positive levels");
        let excess = (i - c) / c;
        worst_excess = worst_excess.max(excess);
        if excess <= 1e-12 {
            ordered += 1;
        }
        if *is_constant && excess.abs() <= 1e-12 {
            equal_on_constant += 1;
        }
        if !*is_constant && excess < -1e-12 {
            strict_elsewhere += 1;
        }
    }
    let total = schedules.len();
    report.check(Measurement::equals("ordered_schedules", ordered as f64, total as f64));
    report.check(Measurement::at_most("max_relative_excess", worst_excess, 1e-12));
    report.check(Measurement::equals("equal_on_constant", equal_on_constant as f64, constant_count as f64));
    report.check(Measurement::equals(
        "strict_on_nonconstant",
        strict_elsewhere as f64,
        (total - constant_count) as f64,
    ));
    report.finish(started, 1.0)
}

/// Mean over seeds of `Σ_k |m̂_k² − m_k²|` with samples drawn at `x*`.
fn mean_estimator_regret(problem: &Problem, schedule: &NoiseSchedule, seeds: u64) -> f64 {
    let horizon = schedule.horizon();
    let truth: Vec<f64> = schedule.levels().map(|m| m * m).collect();
    let beta = default_beta(horizon).expect("T >= 3");
    let x = problem.x_star().to_vec();
    let per_seed: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let mut oracle = GaussianOracle::new(problem, schedule, seed);
            let mut g = vec![0.0; problem.dim()];
            oracle.query_into(&x, 1, &mut g).expect("in range");
            let mut est = EstimatorState::init_second_moment(&g, beta).expect("valid beta");
            let mut trace = Vec::with_capacity(horizon);
            for k in 1..=horizon {
                trace.push(est.value());
                oracle.query_into(&x, k, &mut g).expect("in range");
                est.update_second_moment(&g).expect("matching kind");
            }
            regret(&trace, &truth).expect("equal lengths")
        })
        .collect();
    mean(&per_seed)
}

/// A2: estimator regret stays below `2(D² + M²)T^(2/3)ln(T^(2/3))`.
pub fn regret_suite(options: &VerifyOptions) -> CriterionReport {
    let started = Instant::now();
    let mut report = CriterionReport::new("A2", "regret", "mean estimator regret <= 2(D^2+M^2)T^(2/3)ln(T^(2/3))");
    let problem = make_quadratic(0, 10, 20, 1.0).expect("valid problem");
    for &t in options.horizons.as_deref().unwrap_or(&[1000, 10_000]) {
        let schedule = NoiseSchedule::piecewise_linear(t, 0.5).expect("valid schedule");
        let m = schedule.max_level();
        // D² at its assumed ceiling 4M²
        let bound = regret_bound(4.0 * m * m, m, t);
        let r = mean_estimator_regret(&problem, &schedule, 20);
        report.check(Measurement::at_most(format!("regret_T{t}"), r, bound));
        report.note(format!("T={t}: measured D^2 = {:.4}", schedule.total_variation_sq()));
    }
    report.finish(started, 30.0)
}

fn slope_of(horizons: &[usize], medians: &[f64]) -> f64 {
    let points: Vec<(f64, f64)> = horizons.iter().zip(medians).map(|(&t, &m)| (t as f64, m)).collect();
    fit_slope(&points).map(|f| f.slope).unwrap_or(f64::NAN)
}

/// A3: empirical convergence exponents of the three convex methods.
pub fn rates(options: &VerifyOptions) -> CriterionReport {
    let started = Instant::now();
    let mut report = CriterionReport::new("A3", "rates", "log-log slopes of median suboptimality versus T");
    let alpha = options.alpha.unwrap_or(0.25);
    let horizons = options.horizons.clone().unwrap_or_else(|| vec![1000, 3000, 10_000, 30_000, 100_000]);
    let problem = rate_problem();
    let opt = OptimizerSpec::default();
    let policies = [PolicyName::Constant, PolicyName::Idealized, PolicyName::Adaptive];
    let mut medians = vec![Vec::new(); policies.len()];
    let (mut const_bounds, mut adaptive_bounds) = (Vec::new(), Vec::new());
    for &t in &horizons {
        let schedule = NoiseSchedule::piecewise_linear(t, alpha).expect("valid schedule");
        for (i, &name) in policies.iter().enumerate() {
            medians[i].push(med(finals(&problem, &schedule, name, &opt, 15)));
        }
        let p = theorem2_params(1.0, schedule.max_level(), t, opt.m_coeff).expect("valid params");
        const_bounds.push(bound_constant(1.0, &schedule));
        adaptive_bounds.push(bound_theorem2(1.0, &schedule, p.m, BoundConstant::Stated).expect("valid bound"));
    }
    let slopes: Vec<f64> = medians.iter().map(|m| slope_of(&horizons, m)).collect();
    report.check(Measurement::at_least("constant_slope_min", slopes[0], -0.60));
    report.check(Measurement::at_most("constant_slope_max", slopes[0], -0.40));
    report.check(Measurement::at_least("idealized_slope_min", slopes[1], -0.85));
    report.check(Measurement::at_most("idealized_slope_max", slopes[1], -0.65));
    report.check(Measurement::at_most("adaptive_minus_constant_slope", slopes[2] - slopes[0], -0.08));
    for (name, m) in policies.iter().zip(&medians) {
        report.note(format!("{} medians: {:?}", name.as_str(), m));
    }
    report.note(format!(
        "bound-envelope slope gap (adaptive minus constant): {:.4}",
        slope_of(&horizons, &adaptive_bounds) - slope_of(&horizons, &const_bounds)
    ));
    report.finish(started, 600.0)
}

/// A4: with `c` tuned over `10^k`, `k ∈ [−4, 2]`, median suboptimality orders
/// idealized ≤ variance-adaptive ≤ adaptive ≤ constant.
pub fn ordering() -> CriterionReport {
    let started = Instant::now();
    let mut report = CriterionReport::new("A4", "ordering", "tuned medians: idealized <= alg2 <= alg1 <= constant");
    let problem = rate_problem();
    let t = 10_000;
    let schedule = NoiseSchedule::piecewise_linear(t, 0.5).expect("valid schedule");
    let order = [PolicyName::Idealized, PolicyName::VarianceAdaptive, PolicyName::Adaptive, PolicyName::Constant];
    let mut best = Vec::new();
    for name in order {
        let (c, m) = (-4..=2)
            .map(|k| {
                let opt = OptimizerSpec { c: Some(10f64.powi(k)), ..OptimizerSpec::default() };
                // diverged runs count as +∞
                (k, med(finals(&problem, &schedule, name, &opt, 10)))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty grid");
        report.note(format!("{}: best c = 1e{c}, median {m:e}", name.as_str()));
        best.push(m);
    }
    let delta = 0.1;
    for (i, pair) in best.windows(2).enumerate() {
        let (lo, hi) = (order[i].as_str(), order[i + 1].as_str());
        report.check(Measurement::at_most(format!("{lo}/{hi}"), pair[0] / pair[1], 1.0 + delta));
        report.check(Measurement::at_most(format!("rank_{lo}_before_{hi}"), pair[0] / pair[1], 1.0));
    }
    report.finish(started, 300.0)
}

/// A5: mean suboptimality of the baselines is within 10% of the
/// stepsize-sequence bound.
pub fn theorem1() -> CriterionReport {
    let started = Instant::now();
    let mut report =
        CriterionReport::new("A5", "theorem1", "mean suboptimality <= 1.1 x (R^2 + sum eta^2 m^2)/sum eta");
    let problem = rate_problem();
    let t = 10_000;
    let schedules = [
        ("constant_schedule", NoiseSchedule::constant(1.0, t).expect("valid")),
        ("piecewise_linear", NoiseSchedule::piecewise_linear(t, 0.5).expect("valid")),
    ];
    let opt = OptimizerSpec::default();
    for (label, schedule) in &schedules {
        for name in [PolicyName::Constant, PolicyName::Idealized] {
            let records: Vec<RunRecord> =
                (0..30u64).into_par_iter().map(|s| run(&problem, schedule, name, &opt, s)).collect();
            let m = mean(&records.iter().map(|r| r.final_metric).collect::<Vec<_>>());
            let bound = bound_theorem1(problem.radius(), schedule, &records[0].stepsizes).expect("positive steps");
            report.check(Measurement::at_most(format!("{}_{label}_ratio", name.as_str()), m / bound, 1.1));
        }
    }
    report.finish(started, 180.0)
}

/// A6: at least half the seeds satisfy the high-probability bound with the
/// proved constant.
pub fn theorem2() -> CriterionReport {
    let started = Instant::now();
    let mut report =
        CriterionReport::new("A6", "theorem2", "fraction of seeds within (2R/sqrt T)(32T/sum 1/(m_k+m)) >= 0.5");
    let problem = rate_problem();
    let t = 10_000;
    let schedule = NoiseSchedule::piecewise_linear(t, 0.05).expect("valid");
    for m_coeff in [2.0, 8.0] {
        let opt = OptimizerSpec { m_coeff, ..OptimizerSpec::default() };
        let f = finals(&problem, &schedule, PolicyName::Adaptive, &opt, 40);
        let p = theorem2_params(problem.radius(), schedule.max_level(), t, m_coeff).expect("valid params");
        let frac = |c: BoundConstant| {
            let b = bound_theorem2(problem.radius(), &schedule, p.m, c).expect("valid bound");
            f.iter().filter(|&&v| v <= b).count() as f64 / f.len() as f64
        };
        report.check(Measurement::at_least(format!("fraction_m{m_coeff}_const32"), frac(BoundConstant::Proved), 0.5));
        report
            .note(format!("m_coeff {m_coeff}: fraction within the constant-4 bound = {}", frac(BoundConstant::Stated)));
    }
    report.finish(started, 300.0)
}

/// A7: on a single-spike schedule the adaptive method is slower than the
/// constant baseline.
pub fn adversarial() -> CriterionReport {
    let started = Instant::now();
    let mut report =
        CriterionReport::new("A7", "adversarial", "median adaptive / median constant >= 1.5 on the spike schedule");
    let problem = rate_problem();
    let schedule = NoiseSchedule::adversarial_spike(10_000, 0.3).expect("valid");
    let opt = OptimizerSpec::default();
    let a = med(finals(&problem, &schedule, PolicyName::Adaptive, &opt, 15));
    let c = med(finals(&problem, &schedule, PolicyName::Constant, &opt, 15));
    report.check(Measurement::at_least("adaptive_over_constant", a / c, 1.5));
    report.finish(started, 120.0)
}

/// A8: nonconvex baselines meet their gradient-norm bound; the
/// variance-adaptive stepsize never exceeds `1/(2L)`.
pub fn nonconvex() -> CriterionReport {
    let started = Instant::now();
    let mut report =
        CriterionReport::new("A8", "nonconvex", "mean E||grad f(x_I)||^2 <= 1.2 x bound; alg2 eta <= 1/(2L)");
    let problem = make_smooth_nonconvex(10, 1.0, 0).expect("valid problem");
    let l = problem.smoothness().expect("known L");
    let t = 10_000;
    let schedule = NoiseSchedule::piecewise_linear(t, 0.25).expect("valid");
    let opt = OptimizerSpec { m_coeff: 8.0, ..OptimizerSpec::default() };
    for name in [PolicyName::Constant, PolicyName::Idealized] {
        let records: Vec<RunRecord> =
            (0..30u64).into_par_iter().map(|s| run(&problem, &schedule, name, &opt, s)).collect();
        let expected: Vec<f64> = records.iter().map(|r| r.expected_metric.expect("sampled output")).collect();
        let sampled: Vec<f64> = records.iter().map(|r| r.final_metric).collect();
        let bound =
            bound_nonconvex(problem.initial_gap(), l, &schedule, &records[0].stepsizes).expect("positive steps");
        report.check(Measurement::at_most(format!("{}_ratio", name.as_str()), mean(&expected) / bound, 1.2));
        report.note(format!(
            "{}: bound {bound:e}, mean over I {:e}, mean of sampled x_I {:e}",
            name.as_str(),
            mean(&expected),
            mean(&sampled)
        ));
    }
    let cap = 0.5 / l;
    let worst = (0..30u64)
        .into_par_iter()
        .map(|s| {
            run(&problem, &schedule, PolicyName::VarianceAdaptive, &opt, s)
                .stepsizes
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    report.check(Measurement::at_most("alg2_max_eta", worst, cap));
    report.finish(started, 180.0)
}

fn accounting_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.problem.dim = 10;
    c.problem.n = 20;
    c.horizons = vec![1000];
    c.alphas = vec![0.25, 0.5];
    c.seeds = (0..5).collect();
    c.optimizer.policies = ["constant", "idealized", "adaptive", "variance_adaptive"].map(String::from).to_vec();
    c
}

/// A9: identical configurations produce identical `results.csv` bytes, and
/// every run uses the expected number of oracle queries.
pub fn accounting() -> CriterionReport {
    let started = Instant::now();
    let mut report = CriterionReport::new("A9", "accounting", "byte-identical results; queries T / T+1 / 2(T+1)");
    let config = accounting_config();
    let render = |workers| {
        let rows = run_sweep(&config, workers).expect("valid sweep");
        let mut bytes = Vec::new();
        write_results_to(&mut bytes, &rows).expect("in-memory write");
        (rows, bytes)
    };
    let (rows, first) = render(1);
    let (_, second) = render(1);
    let (_, parallel) = render(4);
    report.check(Measurement::equals("identical_rerun", f64::from(u8::from(first == second)), 1.0));
    report.check(Measurement::equals("identical_across_workers", f64::from(u8::from(first == parallel)), 1.0));
    let t = 1000u64;
    let mismatches = rows
        .iter()
        .filter(|r| {
            let expected = match r.policy {
                PolicyName::Constant | PolicyName::Idealized => t,
                PolicyName::VarianceAdaptive => 2 * (t + 1),
                _ => t + 1,
            };
            r.oracle_queries != expected
        })
        .count();
    report.check(Measurement::equals("query_mismatches", mismatches as f64, 0.0));
    report.check(Measurement::equals("rows", rows.len() as f64, 40.0));
    report.finish(started, 60.0)
}

fn fd_relative_error(problem: &Problem, x: &[f64]) -> f64 {
    let mut y = x.to_vec();
    let fd: Vec<f64> = (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            y[i] = x[i] + h;
            let up = problem.value(&y);
            y[i] = x[i] - h;
            let down = problem.value(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect();
    let g = problem.gradient(x);
    dist_sq(&g, &fd).sqrt() / norm(&fd).max(1e-12)
}

/// A10: analytic gradients agree with central differences.
pub fn gradients() -> CriterionReport {
    let started = Instant::now();
    let mut report = CriterionReport::new("A10", "gradients", "finite-difference relative error <= 1e-5 at 100 points");
    let problems = [
        (ProblemKind::Quadratic, make_quadratic(1, 10, 30, 1.0).expect("valid")),
        (ProblemKind::ConditionedQuadratic, rate_problem()),
        (ProblemKind::Nonconvex, make_smooth_nonconvex(10, 1.0, 0).expect("valid")),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (kind, p) in &problems {
        let worst = (0..100)
            .map(|_| {
                let x: Vec<f64> = p.x_star().iter().map(|c| c + rng.random_range(-3.0..3.0)).collect();
                fd_relative_error(p, &x)
            })
            .fold(0.0, f64::max);
        report.check(Measurement::at_most(format!("{kind:?}_max_relative_error"), worst, 1e-5));
    }
    report.finish(started, 1.0)
}
