//! Stochastic gradient oracles with schedule-driven noise.
//!
//! [`GaussianOracle`] returns `∇f(x) + ξ` where `ξ` has i.i.d. Gaussian
//! coordinates of standard deviation `level(k)/√dim`, so `E‖ξ‖² = level(k)²`
//! regardless of dimension. The noise depends only on `k`, never on `x`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::problem::Problem;
use crate::schedule::NoiseSchedule;
use crate::vector::norm_sq;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("iteration {k} outside [1, {horizon}]")]
    IndexOutOfRange { k: usize, horizon: usize },
    #[error("point has dimension {got}, problem has {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("schedule horizon {schedule} does not cover run horizon {run}")]
    HorizonMismatch { schedule: usize, run: usize },
}

/// How the schedule level relates to the noise-intensity quantity the
/// stepsize rules target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// The level is the noise standard deviation `σ_k`; the true second
    /// moment is `√(σ_k² + ‖∇f(x)‖²)`.
    VarianceTarget,
    /// Second-moment rules treat `m_k := level(k)`, ignoring the
    /// iterate-dependent `‖∇f(x)‖²` contribution.
    #[default]
    SecondMomentProxy,
}

/// A source of stochastic gradients indexed by iteration.
///
/// Runners are generic over this trait so tests can instrument or perturb the
/// gradient stream.
pub trait StochasticOracle {
    fn dim(&self) -> usize;

    fn horizon(&self) -> usize;

    /// Noise level `level(k)` as seen by schedule-aware stepsize rules.
    fn level(&self, k: usize) -> f64;

    /// Writes one stochastic gradient at `(x, k)` into `out` and returns
    /// `‖∇f(x)‖²` of the underlying deterministic gradient.
    fn query_into(&mut self, x: &[f64], k: usize, out: &mut [f64]) -> Result<f64, OracleError>;

    fn query_count(&self) -> u64;
}

pub struct GaussianOracle<'a> {
    problem: &'a Problem,
    schedule: &'a NoiseSchedule,
    mode: NoiseMode,
    rng: ChaCha8Rng,
    queries: u64,
}

impl<'a> GaussianOracle<'a> {
    pub fn new(problem: &'a Problem, schedule: &'a NoiseSchedule, seed: u64) -> Self {
        Self::with_mode(problem, schedule, seed, NoiseMode::default())
    }

    pub fn with_mode(problem: &'a Problem, schedule: &'a NoiseSchedule, seed: u64, mode: NoiseMode) -> Self {
        Self { problem, schedule, mode, rng: ChaCha8Rng::seed_from_u64(seed), queries: 0 }
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn schedule(&self) -> &'a NoiseSchedule {
        self.schedule
    }

    fn check(&self, x: &[f64], k: usize) -> Result<f64, OracleError> {
        if x.len() != self.problem.dim() {
            return Err(OracleError::DimensionMismatch { got: x.len(), expected: self.problem.dim() });
        }
        self.schedule.get(k).ok_or(OracleError::IndexOutOfRange { k, horizon: self.schedule.horizon() })
    }

    pub fn query(&mut self, x: &[f64], k: usize) -> Result<Vec<f64>, OracleError> {
        let mut g = vec![0.0; self.problem.dim()];
        self.query_into(x, k, &mut g)?;
        Ok(g)
    }

    /// Two independent draws at the same `(x, k)`.
    pub fn query_pair(&mut self, x: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>), OracleError> {
        let g = self.query(x, k)?;
        let h = self.query(x, k)?;
        Ok((g, h))
    }

    /// `√(level(k)² + ‖∇f(x)‖²)`, the exact second moment `E‖g(x, k)‖²` under
    /// this oracle. Does not consume randomness or count as a query.
    pub fn effective_second_moment(&self, x: &[f64], k: usize) -> Result<f64, OracleError> {
        let level = self.check(x, k)?;
        let grad = self.problem.gradient(x);
        Ok((level * level + norm_sq(&grad)).sqrt())
    }

    /// The noise-intensity value the mode declares as ground truth at `(x, k)`.
    pub fn target_level(&self, x: &[f64], k: usize) -> Result<f64, OracleError> {
        match self.mode {
            NoiseMode::SecondMomentProxy => self.check(x, k),
            NoiseMode::VarianceTarget => self.effective_second_moment(x, k),
        }
    }
}

impl StochasticOracle for GaussianOracle<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn horizon(&self) -> usize {
        self.schedule.horizon()
    }

    fn level(&self, k: usize) -> f64 {
        self.schedule.level(k)
    }

    fn query_into(&mut self, x: &[f64], k: usize, out: &mut [f64]) -> Result<f64, OracleError> {
        let level = self.check(x, k)?;
        if out.len() != x.len() {
            return Err(OracleError::DimensionMismatch { got: out.len(), expected: x.len() });
        }
        self.problem.gradient_into(x, out);
        let grad_norm_sq = norm_sq(out);
        let std = level / (x.len() as f64).sqrt();
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *o += std * z;
        }
        self.queries += 1;
        Ok(grad_norm_sq)
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}
