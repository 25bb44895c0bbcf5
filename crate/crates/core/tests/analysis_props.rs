use nonstat_core::analysis::{bound_idealized, bound_theorem2, fit_slope, regret_from_run, BoundConstant};
use nonstat_core::oracle::GaussianOracle;
use nonstat_core::policy::{theorem2_params, Policy};
use nonstat_core::problem::make_quadratic;
use nonstat_core::runner::{run_convex, RunOptions};
use nonstat_core::schedule::NoiseSchedule;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn noisy_power_law_slope_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<(f64, f64)> = [1e3, 3e3, 1e4, 3e4, 1e5]
        .iter()
        .map(|&t: &f64| (t, 5.0 * t.powf(-0.75) * (1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0))))
        .collect();
    let fit = fit_slope(&points).unwrap();
    assert!((-0.80..=-0.70).contains(&fit.slope), "slope {}", fit.slope);
    assert!(fit.r_squared > 0.99);
}

proptest! {
    #[test]
    fn exact_power_laws_fit_exactly(a in -2.0f64..2.0, scale in 0.01f64..100.0) {
        let points: Vec<(f64, f64)> = [10.0f64, 100.0, 1e3, 1e4].iter().map(|&t| (t, scale * t.powf(a))).collect();
        let fit = fit_slope(&points).unwrap();
        prop_assert!((fit.slope - a).abs() < 1e-9);
        prop_assert!(fit.r_squared >= 0.0 && fit.r_squared <= 1.0);
    }

    #[test]
    fn theorem2_bound_is_monotone_in_m(m1 in 0.0f64..10.0, dm in 0.0f64..10.0, alpha in 0.0f64..1.0) {
        let s = NoiseSchedule::piecewise_linear(500, alpha).unwrap();
        let lo = bound_theorem2(1.0, &s, m1, BoundConstant::Proved).unwrap();
        let hi = bound_theorem2(1.0, &s, m1 + dm, BoundConstant::Proved).unwrap();
        prop_assert!(hi >= lo * (1.0 - 1e-12));
    }
}

#[test]
fn theorem2_bound_stays_in_algebraic_envelope() {
    let t = 10_000;
    let s = NoiseSchedule::piecewise_linear(t, 0.05).unwrap();
    let params = theorem2_params(1.0, s.max_level(), t, 2.0).unwrap();
    let b = bound_theorem2(1.0, &s, params.m, BoundConstant::Stated).unwrap();
    let ideal = bound_idealized(1.0, &s).unwrap();
    assert!(b.is_finite());
    // 1/(m_k + m) ≥ 1/(m_k (1 + m/min m_k))
    assert!(b <= 4.0 * (1.0 + params.m / s.min_level()) * ideal * (1.0 + 1e-12));
    assert!(b >= 4.0 * ideal);
}

#[test]
fn regret_from_hand_trace() {
    let p = make_quadratic(0, 2, 4, 1.0).unwrap();
    let s = NoiseSchedule::constant(1.0, 2).unwrap();
    let mut o = GaussianOracle::new(&p, &s, 0);
    let mut r = run_convex(&p, &mut o, Policy::fixed(0.1).unwrap(), 0, RunOptions::default()).unwrap();
    assert!(regret_from_run(&r, &s).is_err());
    r.estimator_trace = Some(vec![1.0, 4.0]);
    assert_eq!(regret_from_run(&r, &s).unwrap().regret, 3.0);
}

#[test]
fn zero_noise_regret_is_gradient_mass() {
    let p = make_quadratic(0, 3, 6, 1.0).unwrap();
    let t = 50;
    let s = NoiseSchedule::constant(0.0, t).unwrap();
    let params = theorem2_params(1.0, 1.0, t, 2.0).unwrap();
    let mut o = GaussianOracle::new(&p, &s, 0);
    let policy = Policy::adaptive_second_moment(params.c, params.m, params.beta).unwrap();
    let r = run_convex(&p, &mut o, policy, 0, RunOptions::default()).unwrap();
    let report = regret_from_run(&r, &s).unwrap();
    // with no noise the estimate tracks past squared gradients only
    assert!(report.regret > 0.0);
    assert!(report.gradient_mass > 0.0);
    assert!(report.regret <= report.gradient_mass * 2.0);
}
