//! Stepsize policies.
//!
//! Two families:
//!
//! * schedule-aware baselines that know the noise levels in advance: a single
//!   constant stepsize tuned to the whole-horizon noise energy, and a
//!   per-iteration stepsize inversely proportional to the current level;
//! * adaptive rules `η_k = c/(m̂_k + m)` driven by an online estimate of the
//!   noise level (second moment, first moment, p-th moment, window average, or
//!   paired-sample variance).
//!
//! A [`Policy`] produces `η_k` strictly before `g_k` is drawn and only then
//! observes `g_k`, so stepsizes never depend on the gradient they scale.

use std::collections::BTreeSet;
use std::sync::Mutex;

use log::warn;
use thiserror::Error;

use crate::estimator::{default_beta, EstimatorError, EstimatorKind, EstimatorState};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("schedule has zero total noise energy")]
    ZeroSchedule,
    #[error("noise level {level} at iteration {k} must be positive")]
    NonPositiveLevel { k: usize, level: f64 },
    #[error("stepsize denominator is zero")]
    ZeroDenominator,
    #[error("adaptive policy used before its estimator was initialized")]
    Uninitialized,
    #[error("correction m = {m} is below 2cL = {required}")]
    CorrectionTooSmall { m: f64, required: f64 },
    #[error("policy needs a paired sample")]
    MissingPair,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

fn positive(name: &'static str, value: f64) -> Result<f64, PolicyError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(PolicyError::InvalidParameter { name, value })
    }
}

fn nonnegative(name: &'static str, value: f64) -> Result<f64, PolicyError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(PolicyError::InvalidParameter { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    ConstantBaseline,
    IdealizedBaseline,
    AdaptiveSecondMoment,
    AdaptiveFirstMoment,
    VarianceAdaptive,
    PNorm(f64),
}

impl PolicyKind {
    pub fn is_adaptive(self) -> bool {
        !matches!(self, PolicyKind::ConstantBaseline | PolicyKind::IdealizedBaseline)
    }
}

/// `η = R/√(Σ_k level(k)²)`.
pub fn constant_stepsize(radius: f64, schedule: &NoiseSchedule) -> Result<f64, PolicyError> {
    positive("R", radius)?;
    let energy = schedule.sum_sq();
    if energy <= 0.0 {
        return Err(PolicyError::ZeroSchedule);
    }
    Ok(radius / energy.sqrt())
}

/// `η_k = R/(√T·m_k)`.
pub fn idealized_stepsize(radius: f64, horizon: usize, level: f64) -> Result<f64, PolicyError> {
    positive("m_k", level)?;
    Ok(radius / ((horizon as f64).sqrt() * level))
}

/// `η = c/(m̂^p + m^p)^(1/p)` with `m̂` the estimated level itself.
pub fn p_norm_stepsize(c: f64, m: f64, m_hat: f64, p: f64) -> Result<f64, PolicyError> {
    positive("p", p)?;
    let denom = (m_hat.powf(p) + m.powf(p)).powf(1.0 / p);
    finish(c, denom)
}

fn finish(c: f64, denom: f64) -> Result<f64, PolicyError> {
    positive("c", c)?;
    if denom > 0.0 && denom.is_finite() {
        Ok(c / denom)
    } else {
        Err(PolicyError::ZeroDenominator)
    }
}

/// Adaptive stepsize from a raw estimator value.
///
/// The interpretation of `value` follows the estimator kind: squared kinds
/// (`SecondMomentEma`, `VarianceEma`, `WindowAverage` over `‖g‖²`) give
/// `c/(√value + m)`, `FirstMomentEma` gives `c/(value + m)`, and
/// `PowerMomentEma { p }` holds `m̂^p` and gives `c/(value + m^p)^(1/p)`.
pub fn adaptive_stepsize(c: f64, m: f64, value: f64, kind: EstimatorKind) -> Result<f64, PolicyError> {
    nonnegative("m", m)?;
    nonnegative("estimate", value)?;
    match kind {
        EstimatorKind::SecondMomentEma | EstimatorKind::VarianceEma | EstimatorKind::WindowAverage(_) => {
            finish(c, value.sqrt() + m)
        }
        EstimatorKind::FirstMomentEma => finish(c, value + m),
        EstimatorKind::PowerMomentEma { p } => p_norm_stepsize(c, m, value.powf(1.0 / p), p),
    }
}

/// Logs `message` the first time a `(method, horizon)` pair is seen.
fn warn_once(method: &'static str, horizon: usize, message: impl FnOnce() -> String) {
    static SEEN: Mutex<BTreeSet<(&'static str, usize)>> = Mutex::new(BTreeSet::new());
    let fresh = SEEN.lock().map(|mut seen| seen.insert((method, horizon))).unwrap_or(true);
    if fresh {
        warn!("{}", message());
    }
}

/// Parameters of the adaptive second-moment method for a horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveParams {
    pub c: f64,
    pub m: f64,
    pub beta: f64,
    /// Whether the horizon satisfies the largeness condition the parameter
    /// formulas were derived under.
    pub large_horizon: bool,
}

/// `c = R/√T`, `m = coeff·M·T^(−1/9)·ln(T)^(1/3)`, `β = 1 − 2T^(−2/3)`.
///
/// `m_coeff` is 2 for the rate statement and 8 for the constant that comes out
/// of the full derivation. The horizon is "large" when
/// `2·T^(−1/9)·ln(T)^(1/3) ≤ 1`; below that a warning is logged and the
/// formulas are used anyway.
pub fn theorem2_params(
    radius: f64,
    max_level: f64,
    horizon: usize,
    m_coeff: f64,
) -> Result<AdaptiveParams, PolicyError> {
    positive("R", radius)?;
    nonnegative("M", max_level)?;
    positive("m_coeff", m_coeff)?;
    let beta = default_beta(horizon)?;
    let t = horizon as f64;
    let shrink = t.powf(-1.0 / 9.0) * t.ln().cbrt();
    let large_horizon = 2.0 * shrink <= 1.0;
    if !large_horizon {
        warn_once("second-moment", horizon, || {
            format!(
                "T = {horizon} is below the adaptive method's largeness condition (2·T^(-1/9)·ln(T)^(1/3) = {:.3} > 1)",
                2.0 * shrink
            )
        });
    }
    Ok(AdaptiveParams { c: radius / t.sqrt(), m: m_coeff * max_level * shrink, beta, large_horizon })
}

/// First-moment variant: `c = R/√T`, `m = 8·M·T^(−1/6)·ln(T)^(1/2)`,
/// `β = 1 − 2T^(−2/3)`. Large when `8 ln T ≤ T^(1/3)`.
pub fn first_moment_params(radius: f64, max_level: f64, horizon: usize) -> Result<AdaptiveParams, PolicyError> {
    positive("R", radius)?;
    nonnegative("M", max_level)?;
    let beta = default_beta(horizon)?;
    let t = horizon as f64;
    let large_horizon = 8.0 * t.ln() <= t.cbrt();
    if !large_horizon {
        warn_once("first-moment", horizon, || {
            format!("T = {horizon} is below the first-moment method's largeness condition (8 ln T > T^(1/3))")
        });
    }
    Ok(AdaptiveParams {
        c: radius / t.sqrt(),
        m: 8.0 * max_level * t.powf(-1.0 / 6.0) * t.ln().sqrt(),
        beta,
        large_horizon,
    })
}

/// `m = m_base + 2cL`, which guarantees `c/(σ̂ + m) ≤ 1/(2L)`.
pub fn variance_adaptive_correction(c: f64, smoothness: f64, m_base: f64) -> Result<f64, PolicyError> {
    positive("c", c)?;
    positive("L", smoothness)?;
    nonnegative("m_base", m_base)?;
    Ok(m_base + 2.0 * c * smoothness)
}

/// Nonconvex variance-adaptive parameters: `c = √(2Δ/(LT))`,
/// `m = coeff·M·T^(−1/9)·ln(T)^(1/3) + 2cL`, `β = 1 − 2T^(−2/3)`.
pub fn nonconvex_adaptive_params(
    initial_gap: f64,
    smoothness: f64,
    max_level: f64,
    horizon: usize,
    m_coeff: f64,
) -> Result<AdaptiveParams, PolicyError> {
    positive("Δ", initial_gap)?;
    positive("L", smoothness)?;
    nonnegative("M", max_level)?;
    let beta = default_beta(horizon)?;
    let t = horizon as f64;
    let c = (2.0 * initial_gap / (smoothness * t)).sqrt();
    let m_base = m_coeff * max_level * t.powf(-1.0 / 9.0) * t.ln().cbrt();
    let m = variance_adaptive_correction(c, smoothness, m_base)?;
    Ok(AdaptiveParams { c, m, beta, large_horizon: t.ln() <= t.cbrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonconvexBaseline {
    Constant,
    Idealized,
}

/// Nonconvex baseline stepsizes for every iteration, clipped to `1/(2L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonconvexSteps {
    pub steps: Vec<f64>,
    /// Number of iterations whose formula value exceeded `1/(2L)`.
    pub clipped: usize,
}

/// Constant: `η = √(2Δ/(L·Σσ_k²))`. Idealized: `η_k = √(2Δ/(LT))/σ_k`.
pub fn nonconvex_baseline_stepsizes(
    initial_gap: f64,
    smoothness: f64,
    schedule: &NoiseSchedule,
    kind: NonconvexBaseline,
) -> Result<NonconvexSteps, PolicyError> {
    positive("Δ", initial_gap)?;
    positive("L", smoothness)?;
    let cap = 0.5 / smoothness;
    let raw: Vec<f64> = match kind {
        NonconvexBaseline::Constant => {
            let energy = schedule.sum_sq();
            if energy <= 0.0 {
                return Err(PolicyError::ZeroSchedule);
            }
            let eta = (2.0 * initial_gap / (smoothness * energy)).sqrt();
            vec![eta; schedule.horizon()]
        }
        NonconvexBaseline::Idealized => {
            let scale = (2.0 * initial_gap / (smoothness * schedule.horizon() as f64)).sqrt();
            schedule
                .levels()
                .enumerate()
                .map(|(i, level)| {
                    if level > 0.0 {
                        Ok(scale / level)
                    } else {
                        Err(PolicyError::NonPositiveLevel { k: i + 1, level })
                    }
                })
                .collect::<Result<_, _>>()?
        }
    };
    let clipped = raw.iter().filter(|&&eta| eta > cap).count();
    if clipped > 0 {
        warn!("{clipped} nonconvex baseline stepsizes exceed 1/(2L) = {cap} and were clipped");
    }
    Ok(NonconvexSteps { steps: raw.into_iter().map(|eta| eta.min(cap)).collect(), clipped })
}

#[derive(Debug, Clone)]
enum Rule {
    Fixed(f64),
    InverseLevel { numerator: f64, schedule: NoiseSchedule },
    Explicit(Vec<f64>),
    Adaptive { c: f64, m: f64, beta: f64, template: EstimatorKind, estimator: Option<EstimatorState> },
}

/// Per-run stepsize state.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    rule: Rule,
    cap: Option<f64>,
}

impl Policy {
    /// Fixed stepsize `η` at every iteration.
    pub fn fixed(eta: f64) -> Result<Self, PolicyError> {
        Ok(Self { kind: PolicyKind::ConstantBaseline, rule: Rule::Fixed(positive("η", eta)?), cap: None })
    }

    /// `η = R/√(Σ level²)`.
    pub fn constant_baseline(radius: f64, schedule: &NoiseSchedule) -> Result<Self, PolicyError> {
        Self::fixed(constant_stepsize(radius, schedule)?)
    }

    /// `η_k = numerator/level(k)`.
    pub fn inverse_level(numerator: f64, schedule: NoiseSchedule) -> Result<Self, PolicyError> {
        Ok(Self {
            kind: PolicyKind::IdealizedBaseline,
            rule: Rule::InverseLevel { numerator: positive("numerator", numerator)?, schedule },
            cap: None,
        })
    }

    /// `η_k = R/(√T·level(k))`.
    pub fn idealized_baseline(radius: f64, schedule: NoiseSchedule) -> Result<Self, PolicyError> {
        positive("R", radius)?;
        let numerator = radius / (schedule.horizon() as f64).sqrt();
        Self::inverse_level(numerator, schedule)
    }

    pub fn nonconvex_baseline(
        initial_gap: f64,
        smoothness: f64,
        schedule: &NoiseSchedule,
        kind: NonconvexBaseline,
    ) -> Result<Self, PolicyError> {
        let steps = nonconvex_baseline_stepsizes(initial_gap, smoothness, schedule, kind)?;
        let policy_kind = match kind {
            NonconvexBaseline::Constant => PolicyKind::ConstantBaseline,
            NonconvexBaseline::Idealized => PolicyKind::IdealizedBaseline,
        };
        Ok(Self { kind: policy_kind, rule: Rule::Explicit(steps.steps), cap: Some(0.5 / smoothness) })
    }

    fn adaptive(kind: PolicyKind, c: f64, m: f64, beta: f64, template: EstimatorKind) -> Result<Self, PolicyError> {
        positive("c", c)?;
        nonnegative("m", m)?;
        if !matches!(template, EstimatorKind::WindowAverage(_)) && !(0.0..1.0).contains(&beta) {
            return Err(PolicyError::InvalidParameter { name: "β", value: beta });
        }
        Ok(Self { kind, rule: Rule::Adaptive { c, m, beta, template, estimator: None }, cap: None })
    }

    /// `η_k = c/(m̂_k + m)` with `m̂²` tracked by an exponential moving average.
    pub fn adaptive_second_moment(c: f64, m: f64, beta: f64) -> Result<Self, PolicyError> {
        Self::adaptive(PolicyKind::AdaptiveSecondMoment, c, m, beta, EstimatorKind::SecondMomentEma)
    }

    /// Same rule with `m̂²` the mean of the last `window` values of `‖g‖²`.
    pub fn adaptive_window(c: f64, m: f64, window: usize) -> Result<Self, PolicyError> {
        if window == 0 {
            return Err(EstimatorError::EmptyWindow.into());
        }
        Self::adaptive(PolicyKind::AdaptiveSecondMoment, c, m, 0.0, EstimatorKind::WindowAverage(window))
    }

    /// `η_k = c/(m̂_k + m)` with `m̂` an average of `‖g‖`.
    pub fn adaptive_first_moment(c: f64, m: f64, beta: f64) -> Result<Self, PolicyError> {
        Self::adaptive(PolicyKind::AdaptiveFirstMoment, c, m, beta, EstimatorKind::FirstMomentEma)
    }

    /// `η_k = c/(m̂_k^p + m^p)^(1/p)` with `m̂^p` an average of `‖g‖^p`.
    pub fn p_norm(p: f64, c: f64, m: f64, beta: f64) -> Result<Self, PolicyError> {
        positive("p", p)?;
        Self::adaptive(PolicyKind::PNorm(p), c, m, beta, EstimatorKind::PowerMomentEma { p })
    }

    /// `η_k = c/(σ̂_k + m)` with `σ̂²` estimated from paired samples. Requires
    /// `m ≥ 2cL`; stepsizes are additionally capped at `1/(2L)`.
    pub fn variance_adaptive(c: f64, m: f64, beta: f64, smoothness: f64) -> Result<Self, PolicyError> {
        positive("L", smoothness)?;
        let required = 2.0 * c * smoothness;
        if m < required {
            return Err(PolicyError::CorrectionTooSmall { m, required });
        }
        let mut policy = Self::adaptive(PolicyKind::VarianceAdaptive, c, m, beta, EstimatorKind::VarianceEma)?;
        policy.cap = Some(0.5 / smoothness);
        Ok(policy)
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Upper bound applied to every stepsize, if any.
    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    /// Whether the policy consumes an initialization sample before iteration 1.
    pub fn needs_init(&self) -> bool {
        matches!(self.rule, Rule::Adaptive { .. })
    }

    /// Oracle draws per iteration.
    pub fn samples_per_step(&self) -> usize {
        if self.kind == PolicyKind::VarianceAdaptive {
            2
        } else {
            1
        }
    }

    /// Seeds the estimator from the start-point sample(s). No-op for baselines.
    pub fn initialize(&mut self, g: &[f64], g_prime: Option<&[f64]>) -> Result<(), PolicyError> {
        if let Rule::Adaptive { beta, template, estimator, .. } = &mut self.rule {
            let state = match *template {
                EstimatorKind::SecondMomentEma => EstimatorState::init_second_moment(g, *beta)?,
                EstimatorKind::FirstMomentEma => EstimatorState::init_first_moment(g, *beta)?,
                EstimatorKind::PowerMomentEma { p } => EstimatorState::init_power_moment(g, p, *beta)?,
                EstimatorKind::VarianceEma => {
                    EstimatorState::init_variance(g, g_prime.ok_or(PolicyError::MissingPair)?, *beta)?
                }
                EstimatorKind::WindowAverage(size) => {
                    let mut w = EstimatorState::window(size)?;
                    w.update_window(crate::vector::norm_sq(g))?;
                    w
                }
            };
            *estimator = Some(state);
        }
        Ok(())
    }

    /// `η_k`, computed from information available before `g_k` is drawn.
    pub fn stepsize(&self, k: usize) -> Result<f64, PolicyError> {
        let eta = match &self.rule {
            Rule::Fixed(eta) => *eta,
            Rule::InverseLevel { numerator, schedule } => {
                let level = schedule.try_level(k).map_err(|_| PolicyError::NonPositiveLevel { k, level: f64::NAN })?;
                if level <= 0.0 {
                    return Err(PolicyError::NonPositiveLevel { k, level });
                }
                numerator / level
            }
            Rule::Explicit(steps) => {
                *steps.get(k.wrapping_sub(1)).ok_or(PolicyError::InvalidParameter { name: "k", value: k as f64 })?
            }
            Rule::Adaptive { c, m, estimator, .. } => {
                let est = estimator.as_ref().ok_or(PolicyError::Uninitialized)?;
                adaptive_stepsize(*c, *m, est.value(), est.kind())?
            }
        };
        Ok(match self.cap {
            Some(cap) => eta.min(cap),
            None => eta,
        })
    }

    /// Feeds the gradient(s) drawn at iteration `k` to the estimator.
    pub fn observe(&mut self, g: &[f64], g_prime: Option<&[f64]>) -> Result<(), PolicyError> {
        if let Rule::Adaptive { estimator, .. } = &mut self.rule {
            let est = estimator.as_mut().ok_or(PolicyError::Uninitialized)?;
            match est.kind() {
                EstimatorKind::VarianceEma => est.update_variance(g, g_prime.ok_or(PolicyError::MissingPair)?)?,
                _ => est.observe(g)?,
            }
        }
        Ok(())
    }

    /// Current raw estimator value (`m̂²`, `m̂`, `m̂^p` or `σ̂²`), if adaptive.
    pub fn estimator_value(&self) -> Option<f64> {
        match &self.rule {
            Rule::Adaptive { estimator, .. } => estimator.as_ref().map(EstimatorState::value),
            _ => None,
        }
    }

    /// The estimator's value converted to a squared level, comparable with `m_k²`.
    pub fn estimated_level_sq(&self) -> Option<f64> {
        let value = self.estimator_value()?;
        Some(match self.kind {
            PolicyKind::AdaptiveFirstMoment => value * value,
            PolicyKind::PNorm(p) => value.powf(2.0 / p),
            _ => value,
        })
    }
}
