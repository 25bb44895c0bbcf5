//! Differentiable test objectives with known optima.
//!
//! Two families are provided:
//!
//! * least-squares regression with noiseless labels, `f(x) = ‖Ax − b‖²/(2n)`
//!   where `b = A·x_true`, so `x* = x_true` and `f* = 0`. The design is either
//!   an i.i.d. Gaussian matrix ([`make_quadratic`]) or a rotated matrix with a
//!   prescribed log-spaced spectrum ([`make_conditioned_quadratic`]);
//! * the smooth nonconvex sum `f(x) = Σ x_i²/(1 + x_i²)`, with `f* = 0` at the
//!   origin and gradient-Lipschitz constant `L = 2`.
//!
//! Every problem carries a start point `x₁ = x* + R·u` for a seeded unit vector
//! `u`, so `‖x₁ − x*‖ = R` by construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::vector::{dot, mat_vec, norm};

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("need at least as many samples as dimensions (n = {n}, dim = {dim})")]
    TooFewSamples { n: usize, dim: usize },
    #[error("radius must be finite and nonnegative, got {0}")]
    InvalidRadius(f64),
    #[error("spectrum must have {expected} positive finite eigenvalues")]
    InvalidSpectrum { expected: usize },
    #[error("hessian must be square with side {0}")]
    BadHessian(usize),
}

// Seed streams, so that design, labels and start direction never share draws.
const STREAM_DESIGN: u64 = 1;
const STREAM_START: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform random unit vector of length `dim`.
pub fn random_unit_vector(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, STREAM_START);
    loop {
        let v = gaussian_vec(&mut rng, dim);
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `f(x) = ½ (x − x*)ᵀ H (x − x*)` with symmetric PSD `H`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    dim: usize,
    hessian: Vec<f64>,
    x_star: Vec<f64>,
}

impl Quadratic {
    pub fn from_hessian(hessian: Vec<f64>, x_star: Vec<f64>) -> Result<Self, ProblemError> {
        let dim = x_star.len();
        if dim == 0 {
            return Err(ProblemError::ZeroDimension);
        }
        if hessian.len() != dim * dim {
            return Err(ProblemError::BadHessian(dim));
        }
        Ok(Self { dim, hessian, x_star })
    }

    /// Builds `H = AᵀA/n` from a row-major `n × dim` design.
    pub fn from_design(design: &[f64], n: usize, x_true: Vec<f64>) -> Result<Self, ProblemError> {
        let dim = x_true.len();
        if dim == 0 {
            return Err(ProblemError::ZeroDimension);
        }
        if design.len() != n * dim {
            return Err(ProblemError::BadHessian(dim));
        }
        let mut hessian = vec![0.0; dim * dim];
        for row in design.chunks_exact(dim) {
            for i in 0..dim {
                let ri = row[i];
                for j in i..dim {
                    hessian[i * dim + j] += ri * row[j];
                }
            }
        }
        let scale = 1.0 / n as f64;
        for i in 0..dim {
            for j in i..dim {
                let v = hessian[i * dim + j] * scale;
                hessian[i * dim + j] = v;
                hessian[j * dim + i] = v;
            }
        }
        Self::from_hessian(hessian, x_true)
    }

    pub fn hessian(&self) -> &[f64] {
        &self.hessian
    }

    fn hessian_times_offset(&self, row: usize, x: &[f64]) -> f64 {
        let h = &self.hessian[row * self.dim..(row + 1) * self.dim];
        h.iter().zip(x).zip(&self.x_star).map(|((hij, xi), si)| hij * (xi - si)).sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let quad: f64 = (0..self.dim).map(|r| (x[r] - self.x_star[r]) * self.hessian_times_offset(r, x)).sum();
        0.5 * quad
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.hessian_times_offset(r, x);
        }
    }

    /// Largest eigenvalue of the Hessian by power iteration (Rayleigh quotient).
    pub fn largest_eigenvalue(&self) -> f64 {
        power_iteration(&self.hessian, self.dim, 1e-13, 100_000)
    }
}

/// Dominant eigenvalue of a symmetric PSD row-major matrix.
pub fn power_iteration(matrix: &[f64], dim: usize, tol: f64, max_iter: usize) -> f64 {
    // Non-symmetric start so that it is not orthogonal to the top eigenvector by accident.
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + (i as f64 + 1.0).sqrt() * 1e-3).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut w = vec![0.0; dim];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        mat_vec(matrix, dim, dim, &v, &mut w);
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if (next - lambda).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return next;
        }
        lambda = next;
    }
    lambda
}

#[derive(Debug, Clone)]
pub enum Objective {
    Quadratic(Quadratic),
    /// `Σ x_i²/(1 + x_i²)`
    SmoothNonconvex {
        dim: usize,
    },
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.dim,
            Objective::SmoothNonconvex { dim } => *dim,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Objective::Quadratic(q) => q.value(x),
            Objective::SmoothNonconvex { .. } => x.iter().map(|t| t * t / (1.0 + t * t)).sum(),
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Objective::Quadratic(q) => q.gradient_into(x, out),
            Objective::SmoothNonconvex { .. } => {
                for (o, t) in out.iter_mut().zip(x) {
                    let s = 1.0 + t * t;
                    *o = 2.0 * t / (s * s);
                }
            }
        }
    }
}

/// An objective with its optimum, start point and constants.
#[derive(Debug, Clone)]
pub struct Problem {
    objective: Objective,
    x_star: Vec<f64>,
    f_star: f64,
    start: Vec<f64>,
    radius: f64,
    smoothness: Option<f64>,
    convex: bool,
}

impl Problem {
    /// Wraps an objective; the start point is `x* + radius·u` with `u` drawn
    /// from `start_seed`.
    pub fn new(
        objective: Objective,
        x_star: Vec<f64>,
        f_star: f64,
        smoothness: Option<f64>,
        convex: bool,
        radius: f64,
        start_seed: u64,
    ) -> Result<Self, ProblemError> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(ProblemError::InvalidRadius(radius));
        }
        let u = random_unit_vector(start_seed, x_star.len());
        let start = x_star.iter().zip(&u).map(|(s, ui)| s + radius * ui).collect();
        Ok(Self { objective, x_star, f_star, start, radius, smoothness, convex })
    }

    /// Replaces the start point; the radius is recomputed as `‖x₁ − x*‖`.
    pub fn with_start(mut self, start: Vec<f64>) -> Self {
        assert_eq!(start.len(), self.dim(), "start point has wrong dimension");
        self.radius = crate::vector::dist_sq(&start, &self.x_star).sqrt();
        self.start = start;
        self
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }
    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.objective.gradient_into(x, out)
    }
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }
    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }
    pub fn f_star(&self) -> f64 {
        self.f_star
    }
    pub fn start(&self) -> &[f64] {
        &self.start
    }
    /// `R = ‖x₁ − x*‖`.
    pub fn radius(&self) -> f64 {
        self.radius
    }
    /// Gradient-Lipschitz constant `L`, when known.
    pub fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }
    pub fn is_convex(&self) -> bool {
        self.convex
    }
    /// `Δ = f(x₁) − f*`.
    pub fn initial_gap(&self) -> f64 {
        self.value(&self.start) - self.f_star
    }
    pub fn suboptimality(&self, x: &[f64]) -> f64 {
        self.value(x) - self.f_star
    }
}

/// Random linear regression: Gaussian `n × dim` design, Gaussian `x_true`,
/// noiseless labels. `L` is the top eigenvalue of `AᵀA/n`.
pub fn make_quadratic(seed: u64, dim: usize, n: usize, radius: f64) -> Result<Problem, ProblemError> {
    if dim == 0 {
        return Err(ProblemError::ZeroDimension);
    }
    if n < dim {
        return Err(ProblemError::TooFewSamples { n, dim });
    }
    let mut rng = stream_rng(seed, STREAM_DESIGN);
    let design = gaussian_vec(&mut rng, n * dim);
    let x_true = gaussian_vec(&mut rng, dim);
    quadratic_problem(&design, n, x_true, radius, seed)
}

/// Linear regression whose normalized Gram matrix `AᵀA/n` has eigenvalues
/// log-spaced on `[1/condition, 1]` in a random orthonormal basis.
///
/// The design is `A = √n · Q · diag(√λ) · Vᵀ` with `Q` (`n × dim`, orthonormal
/// columns) and `V` (`dim × dim`, orthogonal) both obtained by Gram–Schmidt on
/// seeded Gaussian matrices.
pub fn make_conditioned_quadratic(
    seed: u64,
    dim: usize,
    n: usize,
    condition: f64,
    radius: f64,
) -> Result<Problem, ProblemError> {
    if !(condition.is_finite() && condition >= 1.0) {
        return Err(ProblemError::InvalidSpectrum { expected: dim });
    }
    let spectrum = log_spaced(1.0 / condition, 1.0, dim);
    make_quadratic_with_spectrum(seed, n, &spectrum, radius)
}

pub fn make_quadratic_with_spectrum(
    seed: u64,
    n: usize,
    spectrum: &[f64],
    radius: f64,
) -> Result<Problem, ProblemError> {
    let dim = spectrum.len();
    if dim == 0 {
        return Err(ProblemError::ZeroDimension);
    }
    if n < dim {
        return Err(ProblemError::TooFewSamples { n, dim });
    }
    if spectrum.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(ProblemError::InvalidSpectrum { expected: dim });
    }
    let mut rng = stream_rng(seed, STREAM_DESIGN);
    let q = orthonormal_columns(&mut rng, n, dim);
    let v = orthonormal_columns(&mut rng, dim, dim);
    let x_true = gaussian_vec(&mut rng, dim);
    // A[r][j] = √n Σ_i Q[r][i] √λ_i V[j][i]
    let sqrt_n = (n as f64).sqrt();
    let mut design = vec![0.0; n * dim];
    for r in 0..n {
        for j in 0..dim {
            let mut acc = 0.0;
            for i in 0..dim {
                acc += q[r * dim + i] * spectrum[i].sqrt() * v[j * dim + i];
            }
            design[r * dim + j] = sqrt_n * acc;
        }
    }
    quadratic_problem(&design, n, x_true, radius, seed)
}

fn quadratic_problem(
    design: &[f64],
    n: usize,
    x_true: Vec<f64>,
    radius: f64,
    seed: u64,
) -> Result<Problem, ProblemError> {
    let quad = Quadratic::from_design(design, n, x_true.clone())?;
    let l = quad.largest_eigenvalue();
    Problem::new(Objective::Quadratic(quad), x_true, 0.0, Some(l), true, radius, seed)
}

/// `Σ x_i²/(1 + x_i²)`: `x* = 0`, `f* = 0`, `L = 2`.
pub fn make_smooth_nonconvex(dim: usize, radius: f64, seed: u64) -> Result<Problem, ProblemError> {
    if dim == 0 {
        return Err(ProblemError::ZeroDimension);
    }
    Problem::new(Objective::SmoothNonconvex { dim }, vec![0.0; dim], 0.0, Some(2.0), false, radius, seed)
}

/// `count` points log-spaced on `[lo, hi]`, ascending.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Row-major `rows × cols` matrix with orthonormal columns (modified Gram–Schmidt).
fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while columns.len() < cols {
        let mut c = gaussian_vec(rng, rows);
        for prev in &columns {
            let p = dot(prev, &c);
            c.iter_mut().zip(prev).for_each(|(ci, pi)| *ci -= p * pi);
        }
        let n = norm(&c);
        if n > 1e-8 {
            c.iter_mut().for_each(|x| *x /= n);
            columns.push(c);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (j, c) in columns.iter().enumerate() {
        for r in 0..rows {
            out[r * cols + j] = c[r];
        }
    }
    out
}
