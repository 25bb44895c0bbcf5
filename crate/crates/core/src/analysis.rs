//! Bound evaluation on concrete schedules, regime classification, estimator
//! regret of recorded runs, and log-log rate fitting.

use thiserror::Error;

use crate::runner::RunRecord;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("level at iteration {k} is {level}, must be positive")]
    NonPositiveLevel { k: usize, level: f64 },
    #[error("stepsize sequence has length {got}, schedule has {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("total stepsize must be positive")]
    ZeroTotalStepsize,
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("slope fit needs at least two points with distinct T")]
    TooFewPoints,
    #[error("metric {0} is not positive")]
    NonPositiveMetric(f64),
    #[error("run record has no estimator trace")]
    MissingTrace,
}

/// `2R·√(Σ m_k²)/T`.
pub fn bound_constant(radius: f64, schedule: &NoiseSchedule) -> f64 {
    2.0 * radius * schedule.sum_sq().sqrt() / schedule.horizon() as f64
}

/// `2R·√T/(Σ 1/m_k)`.
pub fn bound_idealized(radius: f64, schedule: &NoiseSchedule) -> Result<f64, AnalysisError> {
    let mut harmonic = 0.0;
    for (i, level) in schedule.levels().enumerate() {
        if level <= 0.0 {
            return Err(AnalysisError::NonPositiveLevel { k: i + 1, level });
        }
        harmonic += 1.0 / level;
    }
    Ok(2.0 * radius * (schedule.horizon() as f64).sqrt() / harmonic)
}

/// `(R² + Σ η_k² m_k²)/(Σ η_k)`.
pub fn bound_theorem1(radius: f64, schedule: &NoiseSchedule, stepsizes: &[f64]) -> Result<f64, AnalysisError> {
    if stepsizes.len() != schedule.horizon() {
        return Err(AnalysisError::LengthMismatch { got: stepsizes.len(), expected: schedule.horizon() });
    }
    let (mut noise, mut total) = (0.0, 0.0);
    for (&eta, level) in stepsizes.iter().zip(schedule.levels()) {
        noise += eta * eta * level * level;
        total += eta;
    }
    if total <= 0.0 {
        return Err(AnalysisError::ZeroTotalStepsize);
    }
    Ok((radius * radius + noise) / total)
}

/// Leading constant of the adaptive-method bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundConstant {
    /// As stated for the second-moment method.
    Stated,
    /// As derived in full for the second-moment method.
    Proved,
    /// First-moment method.
    FirstMoment,
}

impl BoundConstant {
    pub fn value(self) -> f64 {
        match self {
            BoundConstant::Stated => 4.0,
            BoundConstant::Proved => 32.0,
            BoundConstant::FirstMoment => 12.0,
        }
    }

    pub fn from_value(v: u32) -> Option<Self> {
        match v {
            4 => Some(BoundConstant::Stated),
            32 => Some(BoundConstant::Proved),
            12 => Some(BoundConstant::FirstMoment),
            _ => None,
        }
    }
}

/// `(2R/√T)·(C·T/Σ 1/(m_k + m))`.
pub fn bound_theorem2(
    radius: f64,
    schedule: &NoiseSchedule,
    m: f64,
    constant: BoundConstant,
) -> Result<f64, AnalysisError> {
    if !(m >= 0.0) {
        return Err(AnalysisError::InvalidParameter { name: "m", value: m });
    }
    let mut harmonic = 0.0;
    for (i, level) in schedule.levels().enumerate() {
        let denom = level + m;
        if denom <= 0.0 {
            return Err(AnalysisError::NonPositiveLevel { k: i + 1, level: denom });
        }
        harmonic += 1.0 / denom;
    }
    let t = schedule.horizon() as f64;
    Ok(2.0 * radius / t.sqrt() * constant.value() * t / harmonic)
}

/// `(Δ + (L/2)·Σ η_k² σ_k²)/(Σ η_k)`, the bound on `E‖∇f(x_I)‖²`.
pub fn bound_nonconvex(
    initial_gap: f64,
    smoothness: f64,
    schedule: &NoiseSchedule,
    stepsizes: &[f64],
) -> Result<f64, AnalysisError> {
    if stepsizes.len() != schedule.horizon() {
        return Err(AnalysisError::LengthMismatch { got: stepsizes.len(), expected: schedule.horizon() });
    }
    let (mut noise, mut total) = (0.0, 0.0);
    for (&eta, level) in stepsizes.iter().zip(schedule.levels()) {
        noise += eta * eta * level * level;
        total += eta;
    }
    if total <= 0.0 {
        return Err(AnalysisError::ZeroTotalStepsize);
    }
    Ok((initial_gap + 0.5 * smoothness * noise) / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    MatchesIdealized,
    BeatsConstantOnly,
    Inconclusive,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::MatchesIdealized => "matches_idealized",
            Regime::BeatsConstantOnly => "beats_constant_only",
            Regime::Inconclusive => "inconclusive",
        }
    }
}

/// `MatchesIdealized` if `M/min m_k ≤ T^(1/9)`, else `BeatsConstantOnly` if
/// `M/m_avg ≤ T^(1/9)` with `m_avg² = Σ m_k²/T`, else `Inconclusive`.
pub fn classify_regime(schedule: &NoiseSchedule, horizon: usize) -> Regime {
    let threshold = (horizon as f64).powf(1.0 / 9.0);
    let max = schedule.max_level();
    let min = schedule.min_level();
    if max == 0.0 || (min > 0.0 && max / min <= threshold) {
        return Regime::MatchesIdealized;
    }
    let avg = (schedule.sum_sq() / schedule.horizon() as f64).sqrt();
    if max / avg <= threshold {
        Regime::BeatsConstantOnly
    } else {
        Regime::Inconclusive
    }
}

/// All bounds for one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub constant_baseline: f64,
    /// `None` when some level is zero.
    pub idealized_baseline: Option<f64>,
    pub theorem2: f64,
    /// `(R² + Ση²m²)/Ση` for the supplied stepsizes, if any.
    pub theorem1: Option<f64>,
    pub regime: Regime,
}

pub fn bound_report(
    radius: f64,
    schedule: &NoiseSchedule,
    m: f64,
    constant: BoundConstant,
    stepsizes: Option<&[f64]>,
) -> Result<BoundReport, AnalysisError> {
    Ok(BoundReport {
        constant_baseline: bound_constant(radius, schedule),
        idealized_baseline: bound_idealized(radius, schedule).ok(),
        theorem2: bound_theorem2(radius, schedule, m, constant)?,
        theorem1: stepsizes.map(|s| bound_theorem1(radius, schedule, s)).transpose()?,
        regime: classify_regime(schedule, schedule.horizon()),
    })
}

/// Least-squares line through `(ln T, ln metric)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::TooFewPoints);
    }
    let mut logs = Vec::with_capacity(points.len());
    for &(t, metric) in points {
        if !(metric > 0.0) || !metric.is_finite() {
            return Err(AnalysisError::NonPositiveMetric(metric));
        }
        if !(t > 0.0) {
            return Err(AnalysisError::InvalidParameter { name: "T", value: t });
        }
        logs.push((t.ln(), metric.ln()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(AnalysisError::TooFewPoints);
    }
    let slope = sxy / sxx;
    // a flat response is fitted exactly
    let r_squared = if syy <= 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(SlopeFit { points: points.to_vec(), slope, intercept: my - slope * mx, r_squared })
}

/// Estimator regret of a recorded run against the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretReport {
    /// `Σ_k |m̂_k² − level(k)²|`.
    pub regret: f64,
    /// `Σ_k ‖∇f(x_k)‖²`, the part of the observed second moment the schedule
    /// does not account for.
    pub gradient_mass: f64,
}

pub fn regret_from_run(record: &RunRecord, schedule: &NoiseSchedule) -> Result<RegretReport, AnalysisError> {
    let trace = record.estimator_trace.as_ref().ok_or(AnalysisError::MissingTrace)?;
    if trace.len() > schedule.horizon() {
        return Err(AnalysisError::LengthMismatch { got: trace.len(), expected: schedule.horizon() });
    }
    let regret = trace.iter().zip(schedule.levels()).map(|(est, level)| (est - level * level).abs()).sum();
    Ok(RegretReport { regret, gradient_mass: record.grad_norm_sq.iter().sum() })
}

/// `2(D² + M²)·T^(2/3)·ln(T^(2/3))`, the high-probability regret bound of the
/// second-moment estimator with `β = 1 − 2T^(−2/3)`.
pub fn regret_bound(total_variation_sq: f64, max_level: f64, horizon: usize) -> f64 {
    let t23 = (horizon as f64).powf(2.0 / 3.0);
    2.0 * (total_variation_sq + max_level * max_level) * t23 * t23.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_bound_examples() {
        let s = NoiseSchedule::constant(1.0, 100).unwrap();
        assert_relative_eq!(bound_constant(1.0, &s), 0.2, max_relative = 1e-15);
        let two = NoiseSchedule::custom(vec![3.0, 4.0]).unwrap();
        assert_relative_eq!(bound_constant(1.0, &two), 5.0, max_relative = 1e-15);
    }

    #[test]
    fn idealized_bound_examples() {
        let s = NoiseSchedule::constant(1.0, 100).unwrap();
        assert_relative_eq!(bound_idealized(1.0, &s).unwrap(), 0.2, max_relative = 1e-15);
        let two = NoiseSchedule::custom(vec![1.0, 2.0]).unwrap();
        assert_relative_eq!(bound_idealized(1.0, &two).unwrap(), 2.0 * 2f64.sqrt() / 1.5, max_relative = 1e-15);
        let e1 = NoiseSchedule::piecewise_linear(100, 1.0).unwrap();
        assert!(bound_idealized(1.0, &e1).unwrap() < bound_constant(1.0, &e1));
        let zero = NoiseSchedule::constant(0.0, 3).unwrap();
        assert!(bound_idealized(1.0, &zero).is_err());
    }

    #[test]
    fn theorem1_examples() {
        let s = NoiseSchedule::constant(1.0, 100).unwrap();
        assert_relative_eq!(bound_theorem1(1.0, &s, &[0.1; 100]).unwrap(), 0.2, max_relative = 1e-14);
        assert_eq!(bound_theorem1(1.0, &s, &[0.0; 100]), Err(AnalysisError::ZeroTotalStepsize));
        assert!(bound_theorem1(1.0, &s, &[0.1; 3]).is_err());
    }

    #[test]
    fn theorem2_examples() {
        let s = NoiseSchedule::constant(1.0, 100).unwrap();
        let b = bound_theorem2(1.0, &s, 0.0, BoundConstant::Stated).unwrap();
        assert_relative_eq!(b, 4.0 * 2.0 / 10.0, max_relative = 1e-14);
        let big = bound_theorem2(1.0, &s, 1e12, BoundConstant::Stated).unwrap();
        assert!(big > 1e11);
        assert!(bound_theorem2(1.0, &s, -1.0, BoundConstant::Proved).is_err());
    }

    #[test]
    fn regime_examples() {
        let c = NoiseSchedule::constant(2.0, 1000).unwrap();
        assert_eq!(classify_regime(&c, 1000), Regime::MatchesIdealized);
        let mild = NoiseSchedule::piecewise_linear(10_000, 0.05).unwrap();
        assert_eq!(classify_regime(&mild, 10_000), Regime::MatchesIdealized);
        let wide = NoiseSchedule::piecewise_linear(10_000, 0.3).unwrap();
        assert_eq!(classify_regime(&wide, 10_000), Regime::BeatsConstantOnly);
    }

    #[test]
    fn slope_examples() {
        let f = fit_slope(&[(100.0, 0.1), (10_000.0, 0.01)]).unwrap();
        assert_relative_eq!(f.slope, -0.5, max_relative = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, max_relative = 1e-12);
        let flat = fit_slope(&[(10.0, 2.0), (100.0, 2.0), (1000.0, 2.0)]).unwrap();
        assert_eq!(flat.slope, 0.0);
        assert_eq!(fit_slope(&[(10.0, 0.0), (100.0, 1.0)]), Err(AnalysisError::NonPositiveMetric(0.0)));
        assert_eq!(fit_slope(&[(10.0, 1.0)]), Err(AnalysisError::TooFewPoints));
    }

    #[test]
    fn regret_bound_value() {
        assert!((regret_bound(4.0, 1.0, 1000) - 4605.17).abs() < 0.01);
    }
}
