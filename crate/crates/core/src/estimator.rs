//! Online noise-level estimators.
//!
//! The exponential-moving-average kinds all follow the recursion
//! `v ← β·v + (1 − β)·s` on a per-kind sample `s`:
//!
//! | kind              | sample `s`            | `value` estimates |
//! |-------------------|-----------------------|-------------------|
//! | `SecondMomentEma` | `‖g‖²`                | `m̂²`              |
//! | `FirstMomentEma`  | `‖g‖`                 | `m̂`               |
//! | `VarianceEma`     | `‖g − g′‖²/2`         | `σ̂²`              |
//! | `PowerMomentEma`  | `‖g‖^p`               | `m̂^p`             |
//!
//! `WindowAverage(W)` keeps the mean of the last `W` raw samples instead.

use std::collections::VecDeque;

use thiserror::Error;

use crate::vector::{dist_sq, norm, norm_sq};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("update expects a {expected} estimator, found {found:?}")]
    KindMismatch { expected: &'static str, found: EstimatorKind },
    #[error("decay beta = {0} outside (0, 1)")]
    InvalidBeta(f64),
    #[error("window size must be at least 1")]
    EmptyWindow,
    #[error("exponent p = {0} must be finite and positive")]
    InvalidExponent(f64),
    #[error("horizon T = {0} too short for the default decay (need T >= 3)")]
    HorizonTooShort(usize),
    #[error("sequence lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sample {0} is negative or not finite")]
    InvalidSample(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    SecondMomentEma,
    FirstMomentEma,
    VarianceEma,
    PowerMomentEma { p: f64 },
    WindowAverage(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    kind: EstimatorKind,
    value: f64,
    beta: f64,
    window: VecDeque<f64>,
    window_sum: f64,
    pushes: usize,
}

/// `β = 1 − 2T^(−2/3)`.
pub fn default_beta(horizon: usize) -> Result<f64, EstimatorError> {
    if horizon < 3 {
        return Err(EstimatorError::HorizonTooShort(horizon));
    }
    Ok(1.0 - 2.0 * (horizon as f64).powf(-2.0 / 3.0))
}

/// `Σ_k |estimate_k − truth_k|`.
pub fn regret(estimates: &[f64], truth: &[f64]) -> Result<f64, EstimatorError> {
    if estimates.len() != truth.len() {
        return Err(EstimatorError::LengthMismatch(estimates.len(), truth.len()));
    }
    Ok(estimates.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum())
}

fn check_beta(beta: f64) -> Result<f64, EstimatorError> {
    // β = 0 degenerates to "last sample" and is allowed; β = 1 would never move.
    if (0.0..1.0).contains(&beta) {
        Ok(beta)
    } else {
        Err(EstimatorError::InvalidBeta(beta))
    }
}

impl EstimatorState {
    fn ema(kind: EstimatorKind, value: f64, beta: f64) -> Result<Self, EstimatorError> {
        Ok(Self { kind, value, beta: check_beta(beta)?, window: VecDeque::new(), window_sum: 0.0, pushes: 0 })
    }

    /// `m̂₁² = ‖g₁‖²` from a fresh sample at the start point.
    pub fn init_second_moment(g1: &[f64], beta: f64) -> Result<Self, EstimatorError> {
        Self::ema(EstimatorKind::SecondMomentEma, norm_sq(g1), beta)
    }

    /// `m̂₁ = ‖g₁‖`.
    pub fn init_first_moment(g1: &[f64], beta: f64) -> Result<Self, EstimatorError> {
        Self::ema(EstimatorKind::FirstMomentEma, norm(g1), beta)
    }

    /// `σ̂₁² = ‖g₁ − g₁′‖²/2` from an independent pair at the start point.
    pub fn init_variance(g1: &[f64], g1_prime: &[f64], beta: f64) -> Result<Self, EstimatorError> {
        Self::ema(EstimatorKind::VarianceEma, 0.5 * dist_sq(g1, g1_prime), beta)
    }

    /// `m̂₁^p = ‖g₁‖^p`.
    pub fn init_power_moment(g1: &[f64], p: f64, beta: f64) -> Result<Self, EstimatorError> {
        if !(p.is_finite() && p > 0.0) {
            return Err(EstimatorError::InvalidExponent(p));
        }
        Self::ema(EstimatorKind::PowerMomentEma { p }, norm(g1).powf(p), beta)
    }

    /// Empty sliding window of `size` samples; `value` is 0 until the first sample.
    pub fn window(size: usize) -> Result<Self, EstimatorError> {
        if size == 0 {
            return Err(EstimatorError::EmptyWindow);
        }
        Ok(Self {
            kind: EstimatorKind::WindowAverage(size),
            value: 0.0,
            beta: 0.0,
            window: VecDeque::with_capacity(size),
            window_sum: 0.0,
            pushes: 0,
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn blend(&mut self, sample: f64) {
        self.value = self.beta * self.value + (1.0 - self.beta) * sample;
    }

    fn mismatch(&self, expected: &'static str) -> EstimatorError {
        EstimatorError::KindMismatch { expected, found: self.kind }
    }

    /// `m̂² ← β·m̂² + (1 − β)‖g‖²`
    pub fn update_second_moment(&mut self, g: &[f64]) -> Result<(), EstimatorError> {
        match self.kind {
            EstimatorKind::SecondMomentEma => {
                self.blend(norm_sq(g));
                Ok(())
            }
            _ => Err(self.mismatch("second-moment")),
        }
    }

    /// `m̂ ← β·m̂ + (1 − β)‖g‖`
    pub fn update_first_moment(&mut self, g: &[f64]) -> Result<(), EstimatorError> {
        match self.kind {
            EstimatorKind::FirstMomentEma => {
                self.blend(norm(g));
                Ok(())
            }
            _ => Err(self.mismatch("first-moment")),
        }
    }

    /// `σ̂² ← β·σ̂² + (1 − β)‖g − g′‖²/2`
    pub fn update_variance(&mut self, g: &[f64], g_prime: &[f64]) -> Result<(), EstimatorError> {
        match self.kind {
            EstimatorKind::VarianceEma => {
                self.blend(0.5 * dist_sq(g, g_prime));
                Ok(())
            }
            _ => Err(self.mismatch("variance")),
        }
    }

    /// `m̂^p ← β·m̂^p + (1 − β)‖g‖^p`
    pub fn update_power_moment(&mut self, g: &[f64]) -> Result<(), EstimatorError> {
        match self.kind {
            EstimatorKind::PowerMomentEma { p } => {
                self.blend(norm(g).powf(p));
                Ok(())
            }
            _ => Err(self.mismatch("power-moment")),
        }
    }

    /// Pushes a raw sample; `value` becomes the mean of the last
    /// `min(count, W)` samples.
    pub fn update_window(&mut self, sample: f64) -> Result<(), EstimatorError> {
        let EstimatorKind::WindowAverage(size) = self.kind else {
            return Err(self.mismatch("window"));
        };
        if !(sample.is_finite() && sample >= 0.0) {
            return Err(EstimatorError::InvalidSample(sample));
        }
        if self.window.len() == size {
            if let Some(old) = self.window.pop_front() {
                self.window_sum -= old;
            }
        }
        self.window.push_back(sample);
        self.window_sum += sample;
        self.pushes += 1;
        // re-sum once per window length so the running sum cannot drift
        if self.pushes.is_multiple_of(size) {
            self.window_sum = self.window.iter().sum();
        }
        self.value = (self.window_sum / self.window.len() as f64).max(0.0);
        Ok(())
    }

    /// Feeds the sample appropriate to this kind from a single gradient draw.
    /// Variance estimators need a pair and are rejected here.
    pub fn observe(&mut self, g: &[f64]) -> Result<(), EstimatorError> {
        match self.kind {
            EstimatorKind::SecondMomentEma => self.update_second_moment(g),
            EstimatorKind::FirstMomentEma => self.update_first_moment(g),
            EstimatorKind::PowerMomentEma { .. } => self.update_power_moment(g),
            EstimatorKind::WindowAverage(_) => self.update_window(norm_sq(g)),
            EstimatorKind::VarianceEma => Err(self.mismatch("single-sample")),
        }
    }
}
