use nonstat_core::analysis::{bound_constant, bound_nonconvex};
use nonstat_core::oracle::{GaussianOracle, OracleError, StochasticOracle};
use nonstat_core::policy::{nonconvex_adaptive_params, theorem2_params, NonconvexBaseline, Policy};
use nonstat_core::problem::{make_quadratic, make_smooth_nonconvex, Problem};
use nonstat_core::runner::{
    reservoir_sample, run_convex, run_nonconvex, run_variance_adaptive, weighted_average, RunOptions, RunRecord,
};
use nonstat_core::schedule::NoiseSchedule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Wraps an oracle and replaces the sample returned at one iteration.
struct Tampered<'a> {
    inner: GaussianOracle<'a>,
    at: usize,
    replacement: Vec<f64>,
    seen_at: usize,
}

impl StochasticOracle for Tampered<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    fn level(&self, k: usize) -> f64 {
        self.inner.level(k)
    }
    fn query_into(&mut self, x: &[f64], k: usize, out: &mut [f64]) -> Result<f64, OracleError> {
        let gn = self.inner.query_into(x, k, out)?;
        if k == self.at {
            // the first draw at `at` is the initialization sample when k = 1
            self.seen_at += 1;
            if self.seen_at == 1 + usize::from(self.at == 1) {
                out.copy_from_slice(&self.replacement);
            }
        }
        Ok(gn)
    }
    fn query_count(&self) -> u64 {
        self.inner.query_count()
    }
}

fn quadratic() -> Problem {
    make_quadratic(3, 5, 20, 1.0).unwrap()
}

fn adaptive(t: usize) -> Policy {
    let p = theorem2_params(1.0, 1.0, t, 2.0).unwrap();
    Policy::adaptive_second_moment(p.c, p.m, p.beta).unwrap()
}

#[test]
fn stepsize_is_fixed_before_its_gradient() {
    let p = quadratic();
    let t = 200;
    let s = NoiseSchedule::piecewise_linear(t, 0.5).unwrap();
    for at in [1, 50, 199] {
        let mut plain = GaussianOracle::new(&p, &s, 9);
        let base = run_convex(&p, &mut plain, adaptive(t), 9, RunOptions::default()).unwrap();
        let mut tampered =
            Tampered { inner: GaussianOracle::new(&p, &s, 9), at, replacement: vec![100.0; 5], seen_at: 0 };
        let swapped = run_convex(&p, &mut tampered, adaptive(t), 9, RunOptions::default()).unwrap();
        assert_eq!(base.stepsizes[..at], swapped.stepsizes[..at], "η_1..η_{at} must not see g_{at}");
        assert_ne!(base.stepsizes[at], swapped.stepsizes[at], "η_{} must see g_{at}", at + 1);
    }
}

#[test]
fn oracle_queries_are_accounted_exactly() {
    let p = quadratic();
    let t = 300;
    let s = NoiseSchedule::piecewise_linear(t, 0.3).unwrap();
    let params = theorem2_params(1.0, 1.0, t, 2.0).unwrap();
    let l = p.smoothness().unwrap();
    let cases: Vec<(Policy, u64)> = vec![
        (Policy::constant_baseline(1.0, &s).unwrap(), t as u64),
        (Policy::idealized_baseline(1.0, s.clone()).unwrap(), t as u64),
        (adaptive(t), t as u64 + 1),
        (
            Policy::variance_adaptive(params.c, params.m + 2.0 * params.c * l, params.beta, l).unwrap(),
            2 * (t as u64 + 1),
        ),
    ];
    for (policy, expected) in cases {
        let kind = policy.kind();
        let mut o = GaussianOracle::new(&p, &s, 1);
        let r = if policy.samples_per_step() == 2 {
            run_variance_adaptive(&p, &mut o, policy, 1, RunOptions::default())
        } else {
            run_convex(&p, &mut o, policy, 1, RunOptions::default())
        }
        .unwrap();
        assert_eq!(r.oracle_queries, expected, "{kind:?}");
        assert_eq!(o.query_count(), expected);
        assert_eq!(r.stepsizes.len(), t);
        assert_eq!(r.grad_norm_sq.len(), t);
        if let Some(trace) = &r.estimator_trace {
            assert_eq!(trace.len(), t);
        }
    }
}

fn bits(r: &RunRecord) -> Vec<u64> {
    r.stepsizes
        .iter()
        .chain(&r.x_bar)
        .chain(&r.grad_norm_sq)
        .chain(r.estimator_trace.iter().flatten())
        .chain(std::iter::once(&r.final_metric))
        .map(|v| v.to_bits())
        .collect()
}

#[test]
fn runs_are_bit_reproducible() {
    let p = quadratic();
    let t = 500;
    let s = NoiseSchedule::piecewise_linear(t, 0.5).unwrap();
    let run = || {
        let mut o = GaussianOracle::new(&p, &s, 31);
        run_convex(&p, &mut o, adaptive(t), 31, RunOptions { record_suboptimality: true, ..Default::default() })
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a, b);

    let nc = make_smooth_nonconvex(4, 1.0, 2).unwrap();
    let sample = |seed| {
        let mut o = GaussianOracle::new(&nc, &s, seed);
        let policy = Policy::nonconvex_baseline(nc.initial_gap(), 2.0, &s, NonconvexBaseline::Constant).unwrap();
        run_nonconvex(&nc, &mut o, policy, seed, RunOptions::default()).unwrap()
    };
    assert_eq!(sample(4), sample(4));
}

#[test]
fn averaged_output_is_recomputable_from_iterates() {
    let p = quadratic();
    let t = 400;
    let s = NoiseSchedule::adversarial_spike(t, 0.3).unwrap();
    for policy in [adaptive(t), Policy::idealized_baseline(1.0, s.clone()).unwrap()] {
        let mut o = GaussianOracle::new(&p, &s, 5);
        let r = run_convex(&p, &mut o, policy, 5, RunOptions { retain_iterates: true, ..Default::default() }).unwrap();
        let xs = r.iterates.as_ref().unwrap();
        assert_eq!(xs.len(), t);
        assert_eq!(xs[0], p.start());
        let recomputed = weighted_average(xs, &r.stepsizes).unwrap();
        for (a, b) in recomputed.iter().zip(&r.x_bar) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn uniform_weights_sample_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cells = 10;
    let draws = 100_000;
    let mut counts = vec![0usize; cells];
    for _ in 0..draws {
        counts[reservoir_sample(&vec![0.7; cells], &mut rng).unwrap() - 1] += 1;
    }
    let expected = draws as f64 / cells as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of χ² with 9 degrees of freedom
    assert!(chi2 < 27.88, "χ² = {chi2}");
}

#[test]
fn sampling_probability_is_proportional_to_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let draws = 100_000;
    let ones = (0..draws).filter(|_| reservoir_sample(&[1.0, 3.0], &mut rng) == Some(1)).count();
    let freq = ones as f64 / draws as f64;
    let se = (0.25f64 * 0.75 / draws as f64).sqrt();
    assert!((freq - 0.25).abs() <= 4.0 * se, "P(I = 1) ≈ {freq}");
}

#[test]
fn zero_noise_variance_run_is_gradient_descent() {
    let p = quadratic();
    let t = 100;
    let s = NoiseSchedule::constant(0.0, t).unwrap();
    let l = p.smoothness().unwrap();
    let c = 0.1;
    let m = 2.0 * c * l + 0.3;
    let mut o = GaussianOracle::new(&p, &s, 0);
    let policy = Policy::variance_adaptive(c, m, 0.9, l).unwrap();
    let r = run_variance_adaptive(&p, &mut o, policy, 0, RunOptions { retain_iterates: true, ..Default::default() })
        .unwrap();
    assert!(r.estimator_trace.as_ref().unwrap().iter().all(|&v| v == 0.0));
    assert!(r.stepsizes.iter().all(|&eta| eta == c / m));
    let xs = r.iterates.unwrap();
    let mut x = p.start().to_vec();
    for xk in xs.iter().take(10) {
        assert!(x.iter().zip(xk).all(|(a, b)| (a - b).abs() < 1e-14));
        let g = p.gradient(&x);
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= c / m * gi);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn constant_baseline_meets_its_rate_on_constant_noise() {
    let t = 10_000;
    let s = NoiseSchedule::constant(1.0, t).unwrap();
    let finals: Vec<f64> = (0..30)
        .map(|seed| {
            let p = make_quadratic(seed, 10, 40, 1.0).unwrap();
            let mut o = GaussianOracle::new(&p, &s, 1000 + seed);
            run_convex(&p, &mut o, Policy::constant_baseline(1.0, &s).unwrap(), seed, RunOptions::default())
                .unwrap()
                .final_metric
        })
        .collect();
    let bound = bound_constant(1.0, &s);
    assert!((bound - 0.02).abs() < 1e-15);
    assert!(median(finals.clone()) <= bound, "median {}", median(finals));
}

#[test]
fn nonconvex_baseline_respects_its_bound() {
    let t = 10_000;
    let s = NoiseSchedule::piecewise_linear(t, 0.25).unwrap();
    let p = make_smooth_nonconvex(10, 1.0, 7).unwrap();
    let delta = p.initial_gap();
    for kind in [NonconvexBaseline::Constant, NonconvexBaseline::Idealized] {
        let policy = Policy::nonconvex_baseline(delta, 2.0, &s, kind).unwrap();
        let mut steps = None;
        let mut total = 0.0;
        for seed in 0..30 {
            let mut o = GaussianOracle::new(&p, &s, seed);
            let r = run_nonconvex(&p, &mut o, policy.clone(), seed, RunOptions::default()).unwrap();
            // E[‖∇f(x_I)‖² | trajectory]; a single sampled x_I is too heavy-tailed to average over 30 seeds
            total += r.expected_metric.unwrap();
            steps.get_or_insert(r.stepsizes);
        }
        let bound = bound_nonconvex(delta, 2.0, &s, &steps.unwrap()).unwrap();
        assert!(total / 30.0 <= 1.2 * bound, "{kind:?}: {} vs {bound}", total / 30.0);
    }
}

#[test]
fn variance_adaptive_on_nonconvex_respects_cap() {
    let t = 2000;
    let s = NoiseSchedule::piecewise_linear(t, 0.25).unwrap();
    let p = make_smooth_nonconvex(10, 1.0, 7).unwrap();
    let params = nonconvex_adaptive_params(p.initial_gap(), 2.0, 1.0, t, 8.0).unwrap();
    let mut o = GaussianOracle::new(&p, &s, 3);
    let policy = Policy::variance_adaptive(params.c, params.m, params.beta, 2.0).unwrap();
    let r = run_variance_adaptive(&p, &mut o, policy, 3, RunOptions::default()).unwrap();
    assert!(r.stepsizes.iter().all(|&eta| eta <= 0.25));
    assert!(r.sampled_index.is_some());
    assert_eq!(r.oracle_queries, 2 * (t as u64 + 1));
}
