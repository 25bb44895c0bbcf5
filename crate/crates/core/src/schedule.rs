//! Deterministic noise-intensity sequences.
//!
//! A [`NoiseSchedule`] maps an iteration index `k ∈ [1, T]` to a noise level
//! (the standard deviation scale `σ_k`, or the second-moment scale `m_k`).
//! Formula-backed kinds are evaluated lazily so that very long horizons do not
//! materialize an array; only [`ScheduleKind::Custom`] stores its values.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("horizon {horizon} is too short (need at least {min})")]
    HorizonTooShort { horizon: usize, min: usize },
    #[error("iteration {k} outside [1, {horizon}]")]
    IndexOutOfRange { k: usize, horizon: usize },
    #[error("invalid exponent alpha = {0} (must be finite and nonnegative)")]
    InvalidAlpha(f64),
    #[error("invalid level {value} at iteration {k}")]
    InvalidLevel { k: usize, value: f64 },
    #[error("custom schedule is empty")]
    Empty,
    #[error("failed to read schedule file: {0}")]
    Io(String),
    #[error("line {line}: cannot parse {text:?} as a positive decimal")]
    Parse { line: usize, text: String },
}

/// Shape of a noise schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// Same level at every iteration. A level of zero is allowed and means a
    /// noiseless oracle.
    Constant { level: f64 },
    /// Floor `T^-α` on the first and last fifth, plateau `1` on the middle
    /// fifth, linear ramps in between.
    PiecewiseLinear { alpha: f64 },
    /// Floor `T^-α` everywhere except a single level-`1` spike at `⌊T/2⌋`.
    AdversarialSpike { alpha: f64 },
    /// Explicit list of levels, `values[k - 1] = level(k)`.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    horizon: usize,
}

/// Summary statistics of a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSummary {
    pub max_level: f64,
    pub min_level: f64,
    /// `Σ_{k<T} |level(k)² − level(k+1)²|`.
    pub total_variation_sq: f64,
    /// Whether `total_variation_sq ≤ 4·max_level²`.
    pub bounded_variation: bool,
}

fn check_alpha(alpha: f64) -> Result<(), ScheduleError> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(ScheduleError::InvalidAlpha(alpha))
    }
}

fn check_index(k: usize, horizon: usize) -> Result<(), ScheduleError> {
    if k == 0 || k > horizon {
        Err(ScheduleError::IndexOutOfRange { k, horizon })
    } else {
        Ok(())
    }
}

/// Level of the piecewise-linear model at iteration `k`.
///
/// Segment boundaries are `⌊T/5⌋, ⌊2T/5⌋, ⌊3T/5⌋, ⌊4T/5⌋`; the ramps use the
/// exact fractions `2T/5` and `3T/5` as anchors, which keeps every value in
/// `[T^-α, 1]` even when `T` is not a multiple of five.
pub fn eval_piecewise_linear(horizon: usize, alpha: f64, k: usize) -> Result<f64, ScheduleError> {
    if horizon < 5 {
        return Err(ScheduleError::HorizonTooShort { horizon, min: 5 });
    }
    check_alpha(alpha)?;
    check_index(k, horizon)?;
    Ok(piecewise_linear_unchecked(horizon, alpha, k))
}

fn piecewise_linear_unchecked(horizon: usize, alpha: f64, k: usize) -> f64 {
    let t = horizon as f64;
    let floor = t.powf(-alpha);
    let gamma = 5.0 * (1.0 - floor) / t;
    let kf = k as f64;
    if k <= horizon / 5 {
        floor
    } else if k <= 2 * horizon / 5 {
        gamma * (kf - 2.0 * t / 5.0) + 1.0
    } else if k <= 3 * horizon / 5 {
        1.0
    } else if k <= 4 * horizon / 5 {
        gamma * (3.0 * t / 5.0 - kf) + 1.0
    } else {
        floor
    }
}

/// Level of the single-spike model at iteration `k`: `1` at `⌊T/2⌋`, `T^-α`
/// elsewhere.
pub fn eval_adversarial_spike(horizon: usize, alpha: f64, k: usize) -> Result<f64, ScheduleError> {
    if horizon < 2 {
        return Err(ScheduleError::HorizonTooShort { horizon, min: 2 });
    }
    check_alpha(alpha)?;
    check_index(k, horizon)?;
    Ok(spike_unchecked(horizon, alpha, k))
}

fn spike_unchecked(horizon: usize, alpha: f64, k: usize) -> f64 {
    if k == horizon / 2 {
        1.0
    } else {
        (horizon as f64).powf(-alpha)
    }
}

impl NoiseSchedule {
    pub fn constant(level: f64, horizon: usize) -> Result<Self, ScheduleError> {
        if horizon == 0 {
            return Err(ScheduleError::HorizonTooShort { horizon, min: 1 });
        }
        if !(level.is_finite() && level >= 0.0) {
            return Err(ScheduleError::InvalidLevel { k: 1, value: level });
        }
        Ok(Self { kind: ScheduleKind::Constant { level }, horizon })
    }

    pub fn piecewise_linear(horizon: usize, alpha: f64) -> Result<Self, ScheduleError> {
        if horizon < 5 {
            return Err(ScheduleError::HorizonTooShort { horizon, min: 5 });
        }
        check_alpha(alpha)?;
        Ok(Self { kind: ScheduleKind::PiecewiseLinear { alpha }, horizon })
    }

    pub fn adversarial_spike(horizon: usize, alpha: f64) -> Result<Self, ScheduleError> {
        if horizon < 2 {
            return Err(ScheduleError::HorizonTooShort { horizon, min: 2 });
        }
        check_alpha(alpha)?;
        Ok(Self { kind: ScheduleKind::AdversarialSpike { alpha }, horizon })
    }

    /// Explicit levels; every value must be finite and strictly positive.
    pub fn custom(values: Vec<f64>) -> Result<Self, ScheduleError> {
        if values.is_empty() {
            return Err(ScheduleError::Empty);
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(ScheduleError::InvalidLevel { k: i + 1, value: v });
        }
        let horizon = values.len();
        Ok(Self { kind: ScheduleKind::Custom(values), horizon })
    }

    /// Parses the custom-schedule text format: one positive decimal per line,
    /// line `i` holding `level(i)`, no header. Blank lines are ignored.
    pub fn parse_custom(text: &str) -> Result<Self, ScheduleError> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let v: f64 =
                trimmed.parse().map_err(|_| ScheduleError::Parse { line: i + 1, text: trimmed.to_string() })?;
            if !(v.is_finite() && v > 0.0) {
                return Err(ScheduleError::Parse { line: i + 1, text: trimmed.to_string() });
            }
            values.push(v);
        }
        Self::custom(values)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScheduleError> {
        let text = fs::read_to_string(path).map_err(|e| ScheduleError::Io(e.to_string()))?;
        Self::parse_custom(&text)
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Level at iteration `k`, or `None` outside `[1, T]`.
    pub fn get(&self, k: usize) -> Option<f64> {
        if k == 0 || k > self.horizon {
            return None;
        }
        Some(match &self.kind {
            ScheduleKind::Constant { level } => *level,
            ScheduleKind::PiecewiseLinear { alpha } => piecewise_linear_unchecked(self.horizon, *alpha, k),
            ScheduleKind::AdversarialSpike { alpha } => spike_unchecked(self.horizon, *alpha, k),
            ScheduleKind::Custom(values) => values[k - 1],
        })
    }

    /// Level at iteration `k`.
    ///
    /// # Panics
    /// If `k` is outside `[1, T]`; use [`NoiseSchedule::get`] for a checked lookup.
    pub fn level(&self, k: usize) -> f64 {
        match self.get(k) {
            Some(v) => v,
            None => panic!("iteration {k} outside [1, {}]", self.horizon),
        }
    }

    pub fn try_level(&self, k: usize) -> Result<f64, ScheduleError> {
        self.get(k).ok_or(ScheduleError::IndexOutOfRange { k, horizon: self.horizon })
    }

    /// Levels `level(1), ..., level(T)` in order.
    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.horizon).map(move |k| self.level(k))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.levels().collect()
    }

    pub fn max_level(&self) -> f64 {
        self.levels().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_level(&self) -> f64 {
        self.levels().fold(f64::INFINITY, f64::min)
    }

    /// `Σ_k level(k)²`.
    pub fn sum_sq(&self) -> f64 {
        self.levels().map(|v| v * v).sum()
    }

    pub fn total_variation_sq(&self) -> f64 {
        let mut total = 0.0;
        let mut prev: Option<f64> = None;
        for v in self.levels() {
            if let Some(p) = prev {
                total += (p * p - v * v).abs();
            }
            prev = Some(v);
        }
        total
    }

    pub fn summarize(&self) -> ScheduleSummary {
        let max_level = self.max_level();
        let total_variation_sq = self.total_variation_sq();
        ScheduleSummary {
            max_level,
            min_level: self.min_level(),
            total_variation_sq,
            bounded_variation: total_variation_sq <= 4.0 * max_level * max_level,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn piecewise_linear_examples() {
        assert_eq!(eval_piecewise_linear(100, 1.0, 50).unwrap(), 1.0);
        assert_relative_eq!(eval_piecewise_linear(100, 1.0, 10).unwrap(), 0.01, max_relative = 1e-15);
        // γ = 5(1 − 10⁻²)/100 = 0.0495, level = γ(30 − 40) + 1
        assert_relative_eq!(eval_piecewise_linear(100, 1.0, 30).unwrap(), 0.505, max_relative = 1e-14);
    }

    #[test]
    fn piecewise_linear_rejects_bad_input() {
        assert_eq!(eval_piecewise_linear(4, 1.0, 1), Err(ScheduleError::HorizonTooShort { horizon: 4, min: 5 }));
        assert_eq!(eval_piecewise_linear(100, 1.0, 0), Err(ScheduleError::IndexOutOfRange { k: 0, horizon: 100 }));
        assert!(eval_piecewise_linear(100, 1.0, 101).is_err());
        assert!(NoiseSchedule::piecewise_linear(100, -0.1).is_err());
    }

    #[test]
    fn spike_examples() {
        assert_eq!(eval_adversarial_spike(100, 0.3, 50).unwrap(), 1.0);
        assert_relative_eq!(eval_adversarial_spike(100, 0.3, 7).unwrap(), 0.251_188_643_150_958, max_relative = 1e-12);
        assert_eq!(eval_adversarial_spike(100, 0.0, 7).unwrap(), 1.0);
        assert!(eval_adversarial_spike(1, 0.3, 1).is_err());
    }

    #[test]
    fn summarize_constant() {
        let s = NoiseSchedule::constant(2.0, 10).unwrap().summarize();
        assert_eq!(s.max_level, 2.0);
        assert_eq!(s.min_level, 2.0);
        assert_eq!(s.total_variation_sq, 0.0);
        assert!(s.bounded_variation);
    }

    #[test]
    fn summarize_piecewise_linear() {
        let s = NoiseSchedule::piecewise_linear(100, 1.0).unwrap().summarize();
        assert_eq!(s.max_level, 1.0);
        assert_relative_eq!(s.min_level, 0.01, max_relative = 1e-15);
        // one full climb and one full descent of the squared level
        assert_relative_eq!(s.total_variation_sq, 2.0 * (1.0 - 1e-4), max_relative = 1e-12);
        assert!(s.bounded_variation);
    }

    #[test]
    fn summarize_spike() {
        let s = NoiseSchedule::adversarial_spike(100, 0.3).unwrap().summarize();
        assert_eq!(s.max_level, 1.0);
        assert_relative_eq!(s.total_variation_sq, 2.0 * (1.0 - 100f64.powf(-0.6)), max_relative = 1e-12);
    }

    #[test]
    fn custom_parse_and_validation() {
        let s = NoiseSchedule::parse_custom("0.5\n1.5\n\n2\n").unwrap();
        assert_eq!(s.horizon(), 3);
        assert_eq!(s.to_vec(), vec![0.5, 1.5, 2.0]);
        assert!(matches!(NoiseSchedule::parse_custom("1\n-2\n"), Err(ScheduleError::Parse { line: 2, .. })));
        assert!(matches!(NoiseSchedule::parse_custom("abc"), Err(ScheduleError::Parse { line: 1, .. })));
        assert_eq!(NoiseSchedule::parse_custom("\n"), Err(ScheduleError::Empty));
    }

    #[test]
    fn level_lookup_is_checked() {
        let s = NoiseSchedule::constant(1.0, 3).unwrap();
        assert_eq!(s.get(0), None);
        assert_eq!(s.get(4), None);
        assert!(s.try_level(4).is_err());
    }
}
