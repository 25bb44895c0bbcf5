//! The SGD loop `x_{k+1} = x_k − η_k g_k`.
//!
//! Every run computes `η_k` before drawing `g_k`, accumulates the η-weighted
//! average of `x_1..x_T` online, and, for nonconvex runs, keeps a single
//! candidate for the output index `I` with `P(I = i) ∝ η_i` by weighted
//! reservoir sampling. Memory is `O(dim + T)` scalars unless iterates are
//! retained explicitly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::oracle::{OracleError, StochasticOracle};
use crate::policy::{Policy, PolicyError, PolicyKind};
use crate::problem::Problem;
use crate::vector::{all_finite, axpy};

/// ChaCha stream used for output-index sampling, distinct from the oracle's.
const STREAM_SAMPLING: u64 = 7;

#[derive(Debug, Error, PartialEq)]
pub enum RunError {
    #[error("problem is not convex")]
    NotConvex,
    #[error("problem has no known smoothness constant")]
    UnknownSmoothness,
    #[error("policy {0:?} cannot be run by this runner")]
    WrongPolicy(PolicyKind),
    #[error("oracle dimension {oracle} differs from problem dimension {problem}")]
    DimensionMismatch { oracle: usize, problem: usize },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("stepsize {eta} at iteration {k} exceeds 1/(2L) = {cap}")]
    StepAboveCap { k: usize, eta: f64, cap: f64 },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("sequences have lengths {xs} and {weights}")]
    LengthMismatch { xs: usize, weights: usize },
    #[error("total weight must be positive")]
    ZeroWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The iterate became non-finite after the update at `iteration`.
    Failed {
        iteration: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record `f(x_k) − f*` for every `k` (convex problems). Costs one extra
    /// function evaluation per iteration.
    pub record_suboptimality: bool,
    /// Keep every iterate `x_1..x_T`. Debug aid for small `T`.
    pub retain_iterates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub policy: PolicyKind,
    pub horizon: usize,
    pub seed: u64,
    /// `η_1..η_T`.
    pub stepsizes: Vec<f64>,
    /// `‖∇f(x_k)‖²`, `k = 1..T`.
    pub grad_norm_sq: Vec<f64>,
    /// `f(x_k) − f*`, present when requested on a convex problem.
    pub suboptimality: Option<Vec<f64>>,
    /// Squared-level estimate used to pick `η_k`, present for adaptive policies.
    pub estimator_trace: Option<Vec<f64>>,
    /// `Σ η_k x_k / Σ η_k`.
    pub x_bar: Vec<f64>,
    /// 1-based output index `I` of nonconvex runs.
    pub sampled_index: Option<usize>,
    pub sampled_point: Option<Vec<f64>>,
    /// `Σ η_k ‖∇f(x_k)‖² / Σ η_k`, the expectation of the sampled metric over `I`.
    pub expected_metric: Option<f64>,
    /// `f(x̄_T) − f*` for convex runs, `‖∇f(x_I)‖²` for nonconvex runs,
    /// `+∞` for failed runs.
    pub final_metric: f64,
    pub oracle_queries: u64,
    pub iterates: Option<Vec<Vec<f64>>>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Output {
    Average,
    Sample,
}

/// Runs a single-sample policy on a convex problem and reports `f(x̄_T) − f*`.
///
/// Adaptive policies draw one extra sample at `x_1` to initialize the
/// estimator, so they use `T + 1` oracle queries; baselines use `T`.
pub fn run_convex<O: StochasticOracle + ?Sized>(
    problem: &Problem,
    oracle: &mut O,
    policy: Policy,
    seed: u64,
    options: RunOptions,
) -> Result<RunRecord, RunError> {
    if !problem.is_convex() {
        return Err(RunError::NotConvex);
    }
    if policy.samples_per_step() != 1 {
        return Err(RunError::WrongPolicy(policy.kind()));
    }
    execute(problem, oracle, policy, seed, options, Output::Average)
}

/// Runs the paired-sample variance-adaptive method.
///
/// Each iteration draws `g_k, g_k'` at `x_k` and steps along their mean; one
/// extra pair at `x_1` initializes `σ̂²`, for `2(T + 1)` queries in total.
/// Convex problems report `f(x̄_T) − f*`, nonconvex ones `‖∇f(x_I)‖²`.
pub fn run_variance_adaptive<O: StochasticOracle + ?Sized>(
    problem: &Problem,
    oracle: &mut O,
    policy: Policy,
    seed: u64,
    options: RunOptions,
) -> Result<RunRecord, RunError> {
    if policy.kind() != PolicyKind::VarianceAdaptive {
        return Err(RunError::WrongPolicy(policy.kind()));
    }
    if problem.smoothness().is_none() {
        return Err(RunError::UnknownSmoothness);
    }
    let output = if problem.is_convex() { Output::Average } else { Output::Sample };
    execute(problem, oracle, policy, seed, options, output)
}

/// Runs any policy and reports `‖∇f(x_I)‖²` with `P(I = i) ∝ η_i`.
///
/// Requires a known smoothness constant `L`; a stepsize above `1/(2L)` is an
/// error.
pub fn run_nonconvex<O: StochasticOracle + ?Sized>(
    problem: &Problem,
    oracle: &mut O,
    policy: Policy,
    seed: u64,
    options: RunOptions,
) -> Result<RunRecord, RunError> {
    let l = problem.smoothness().ok_or(RunError::UnknownSmoothness)?;
    let record = execute(problem, oracle, policy, seed, options, Output::Sample)?;
    let cap = 0.5 / l;
    if let Some((i, &eta)) = record.stepsizes.iter().enumerate().find(|(_, &eta)| eta > cap) {
        return Err(RunError::StepAboveCap { k: i + 1, eta, cap });
    }
    Ok(record)
}

fn execute<O: StochasticOracle + ?Sized>(
    problem: &Problem,
    oracle: &mut O,
    mut policy: Policy,
    seed: u64,
    options: RunOptions,
    output: Output,
) -> Result<RunRecord, RunError> {
    let dim = problem.dim();
    if oracle.dim() != dim {
        return Err(RunError::DimensionMismatch { oracle: oracle.dim(), problem: dim });
    }
    let horizon = oracle.horizon();
    if horizon == 0 {
        return Err(RunError::EmptyHorizon);
    }
    let paired = policy.samples_per_step() == 2;
    let adaptive = policy.needs_init();
    let queries_before = oracle.query_count();

    let mut x = problem.start().to_vec();
    let mut g = vec![0.0; dim];
    let mut g_prime = vec![0.0; dim];

    if adaptive {
        oracle.query_into(&x, 1, &mut g)?;
        if paired {
            oracle.query_into(&x, 1, &mut g_prime)?;
            policy.initialize(&g, Some(&g_prime))?;
        } else {
            policy.initialize(&g, None)?;
        }
    }

    let mut stepsizes = Vec::with_capacity(horizon);
    let mut grad_norm_sq = Vec::with_capacity(horizon);
    let mut suboptimality = (options.record_suboptimality && problem.is_convex()).then(|| Vec::with_capacity(horizon));
    let mut estimator_trace = adaptive.then(|| Vec::with_capacity(horizon));
    let mut iterates = options.retain_iterates.then(|| Vec::with_capacity(horizon));

    let mut weighted_sum = vec![0.0; dim];
    let mut total_weight = 0.0;
    let mut weighted_metric = 0.0;
    let mut sampler = ChaCha8Rng::seed_from_u64(seed);
    sampler.set_stream(STREAM_SAMPLING);
    let mut candidate: Option<(usize, f64, Vec<f64>)> = None;
    let mut status = RunStatus::Completed;

    for k in 1..=horizon {
        let eta = policy.stepsize(k)?;
        if let (Some(trace), Some(v)) = (estimator_trace.as_mut(), policy.estimated_level_sq()) {
            trace.push(v);
        }
        if let Some(trace) = suboptimality.as_mut() {
            trace.push(problem.suboptimality(&x));
        }
        if let Some(store) = iterates.as_mut() {
            store.push(x.clone());
        }
        stepsizes.push(eta);
        axpy(eta, &x, &mut weighted_sum);
        total_weight += eta;

        let gn = oracle.query_into(&x, k, &mut g)?;
        grad_norm_sq.push(gn);
        weighted_metric += eta * gn;

        if output == Output::Sample && total_weight > 0.0 && sampler.random::<f64>() * total_weight < eta {
            candidate = Some((k, gn, x.clone()));
        }

        if paired {
            oracle.query_into(&x, k, &mut g_prime)?;
            policy.observe(&g, Some(&g_prime))?;
            for (gi, hi) in g.iter_mut().zip(&g_prime) {
                *gi = 0.5 * (*gi + hi);
            }
        } else {
            policy.observe(&g, None)?;
        }
        axpy(-eta, &g, &mut x);

        if !all_finite(&x) {
            status = RunStatus::Failed { iteration: k, reason: "non-finite iterate".into() };
            break;
        }
    }

    let x_bar = if total_weight > 0.0 {
        weighted_sum.iter().map(|s| s / total_weight).collect()
    } else {
        problem.start().to_vec()
    };
    let (sampled_index, sampled_metric, sampled_point) = match candidate {
        Some((i, m, p)) => (Some(i), m, Some(p)),
        None => (None, f64::NAN, None),
    };
    let final_metric = match (&status, output) {
        (RunStatus::Failed { .. }, _) => f64::INFINITY,
        (_, Output::Average) => {
            let v = problem.suboptimality(&x_bar);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        }
        (_, Output::Sample) => sampled_metric,
    };

    Ok(RunRecord {
        policy: policy.kind(),
        horizon,
        seed,
        stepsizes,
        grad_norm_sq,
        suboptimality,
        estimator_trace,
        x_bar,
        sampled_index,
        sampled_point,
        expected_metric: (output == Output::Sample && total_weight > 0.0).then(|| weighted_metric / total_weight),
        final_metric,
        oracle_queries: oracle.query_count() - queries_before,
        iterates,
        status,
    })
}

/// `Σ η_k x_k / Σ η_k`.
pub fn weighted_average(xs: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>, RunError> {
    if xs.len() != weights.len() || xs.is_empty() {
        return Err(RunError::LengthMismatch { xs: xs.len(), weights: weights.len() });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(RunError::ZeroWeight);
    }
    let mut out = vec![0.0; xs[0].len()];
    for (x, &w) in xs.iter().zip(weights) {
        if x.len() != out.len() {
            return Err(RunError::LengthMismatch { xs: x.len(), weights: out.len() });
        }
        axpy(w, x, &mut out);
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Samples a 1-based index with `P(I = i) ∝ weights[i - 1]` by a single
/// online pass, the same procedure nonconvex runs use.
pub fn reservoir_sample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let mut total = 0.0;
    let mut chosen = None;
    for (i, &w) in weights.iter().enumerate() {
        total += w;
        if total > 0.0 && rng.random::<f64>() * total < w {
            chosen = Some(i + 1);
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::GaussianOracle;
    use crate::problem::{Objective, Quadratic};
    use crate::schedule::NoiseSchedule;

    fn scalar_problem(start: f64) -> Problem {
        let q = Quadratic::from_hessian(vec![1.0], vec![0.0]).unwrap();
        Problem::new(Objective::Quadratic(q), vec![0.0], 0.0, Some(1.0), true, 1.0, 0).unwrap().with_start(vec![start])
    }

    #[test]
    fn weighted_average_examples() {
        assert_eq!(weighted_average(&[vec![0.0], vec![2.0]], &[1.0, 1.0]).unwrap(), vec![1.0]);
        assert_eq!(weighted_average(&[vec![5.0, -1.0]], &[0.3]).unwrap(), vec![5.0, -1.0]);
        assert_eq!(weighted_average(&[vec![0.0], vec![4.0]], &[1.0, 3.0]).unwrap(), vec![3.0]);
        assert!(weighted_average(&[vec![0.0]], &[1.0, 1.0]).is_err());
        assert_eq!(weighted_average(&[vec![0.0]], &[0.0]), Err(RunError::ZeroWeight));
    }

    #[test]
    fn single_step_average_is_start() {
        // x̄ averages x_1..x_T, so with T = 1 it is x_1
        let p = scalar_problem(2.0);
        let s = NoiseSchedule::constant(0.0, 1).unwrap();
        let mut o = GaussianOracle::new(&p, &s, 0);
        let r = run_convex(
            &p,
            &mut o,
            Policy::fixed(0.5).unwrap(),
            0,
            RunOptions { retain_iterates: true, ..Default::default() },
        )
        .unwrap();
        assert_eq!(r.x_bar, vec![2.0]);
        assert_eq!(r.oracle_queries, 1);
        assert_eq!(r.grad_norm_sq, vec![4.0]);
    }

    #[test]
    fn zero_noise_descent_is_monotone() {
        let p = scalar_problem(3.0);
        let s = NoiseSchedule::constant(0.0, 20).unwrap();
        let mut o = GaussianOracle::new(&p, &s, 0);
        let opts = RunOptions { record_suboptimality: true, retain_iterates: true };
        let r = run_convex(&p, &mut o, Policy::fixed(0.5).unwrap(), 0, opts).unwrap();
        let sub = r.suboptimality.unwrap();
        assert!(sub.windows(2).all(|w| w[1] < w[0]));
        let iterates = r.iterates.unwrap();
        assert_eq!(iterates[1], vec![1.5]);
    }

    #[test]
    fn divergence_is_tagged() {
        let p = scalar_problem(1.0);
        let s = NoiseSchedule::constant(0.0, 2000).unwrap();
        let mut o = GaussianOracle::new(&p, &s, 0);
        let r = run_convex(&p, &mut o, Policy::fixed(10.0).unwrap(), 0, RunOptions::default()).unwrap();
        assert!(matches!(r.status, RunStatus::Failed { .. }));
        assert_eq!(r.final_metric, f64::INFINITY);
    }

    #[test]
    fn reservoir_sample_respects_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(reservoir_sample(&[0.0, 2.0, 0.0], &mut rng), Some(2));
        }
        assert_eq!(reservoir_sample(&[], &mut rng), None);
    }

    #[test]
    fn nonconvex_rejects_steps_above_cap() {
        let p = crate::problem::make_smooth_nonconvex(3, 1.0, 0).unwrap();
        let s = NoiseSchedule::constant(1.0, 10).unwrap();
        let mut o = GaussianOracle::new(&p, &s, 0);
        let err = run_nonconvex(&p, &mut o, Policy::fixed(1.0).unwrap(), 0, RunOptions::default()).unwrap_err();
        assert!(matches!(err, RunError::StepAboveCap { k: 1, .. }));
    }
}
