//! The pair-splitting integral and appendix checks against independent
//! oracles: closed forms, one-dimensional CDF integrals and Monte Carlo.

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};
use wealthdyn::appendix::{
    density_log_derivative_propagation, extremal_closed_form, log_grid, main_inequality_check,
    pair_split_integral, y_functional, AppendixError, Cutoff, DensityOnRay,
};
use wealthdyn::bounds::BoundParams;
use wealthdyn::dynamics::PopulationState;
use wealthdyn::kernels::KernelSpec;
use wealthdyn::metrics::tail_probability;
use wealthdyn::rng::{Domain, Stream};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// `(m, s)` of `ln U` for a lognormal factor with mean `alpha`, sd `gamma`.
fn log_params(alpha: f64, gamma: f64) -> (f64, f64) {
    let s2 = (1.0 + (gamma / alpha).powi(2)).ln();
    (alpha.ln() - s2 / 2.0, s2.sqrt())
}

/// `E[(Y - X)+] = int F_X (1 - F_Y)` by composite Simpson on a fine grid.
fn cdf_identity(k: &KernelSpec, x: f64, y: f64) -> f64 {
    let lx = k.conditional_law(x).unwrap();
    let ly = k.conditional_law(y).unwrap();
    let lo = lx
        .truncated_support(1e-14)
        .0
        .min(ly.truncated_support(1e-14).0);
    let hi = lx
        .truncated_support(1e-14)
        .1
        .max(ly.truncated_support(1e-14).1);
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let f = |t: f64| lx.cdf(t) * ly.survival(t);
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn matches_cdf_identity() {
    for k in [
        KernelSpec::lognormal(1.02, 0.5, 0.2).unwrap(),
        KernelSpec::gamma(1.0, 0.3, 0.15).unwrap(),
    ] {
        for (x, y) in [(1.0, 1.0), (1.0, 2.0), (3.0, 1.5)] {
            let f = pair_split_integral(&k, x, y).unwrap().value;
            let oracle = cdf_identity(&k, x, y);
            assert!(
                (f - oracle).abs() < 1e-7 * (1.02 * x.max(y) + 0.5),
                "{x},{y}: {f} vs {oracle}"
            );
        }
    }
}

#[test]
fn matches_lognormal_exchange_formula() {
    // E[(Y - X)+] for independent lognormals: E[Y] Phi(d1) - E[X] Phi(d2).
    let (alpha, gamma) = (1.02, 0.2);
    let k = KernelSpec::lognormal(alpha, 0.0, gamma).unwrap();
    let (_, s) = log_params(alpha, gamma);
    let sigma = s * 2f64.sqrt();
    let n = std_normal();
    for (x, y) in [(1.0, 1.0), (1.0, 1.3), (2.0, 1.0), (50.0, 40.0)] {
        let (ex, ey) = (alpha * x, alpha * y);
        let d1 = ((ey / ex).ln() + sigma * sigma / 2.0) / sigma;
        let exact = ey * n.cdf(d1) - ex * n.cdf(d1 - sigma);
        let f = pair_split_integral(&k, x, y).unwrap().value;
        assert!(
            (f - exact).abs() < 1e-7 * alpha * x.max(y),
            "{x},{y}: {f} vs {exact}"
        );
    }
}

#[test]
fn antisymmetric_part_is_the_mean_difference() {
    let k = KernelSpec::gamma(1.05, 0.4, 0.25).unwrap();
    for (x, y) in [(1.0, 2.0), (0.5, 7.0), (10.0, 11.0)] {
        let d = pair_split_integral(&k, x, y).unwrap().value
            - pair_split_integral(&k, y, x).unwrap().value;
        assert!((d - 1.05 * (y - x)).abs() < 1e-6 * (y.max(x)), "{d}");
    }
}

#[test]
fn diagonal_matches_monte_carlo() {
    let k = KernelSpec::gamma(1.0, 0.2, 0.2).unwrap();
    let x = 2.0;
    let f = pair_split_integral(&k, x, x).unwrap().value;
    let mut rng = Stream::new(11, Domain::KernelProbe, 1, 0);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let a = k.sample_transition(x, &mut rng).unwrap();
        let b = k.sample_transition(x, &mut rng).unwrap();
        let v = (b - a).max(0.0);
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((f - mean).abs() < 3.0 * se, "{f} vs {mean} +- {se}");
}

#[test]
fn near_normal_diagonal() {
    // For iid normals E|X - Y| = 2 s / sqrt(pi), and F(x, x) is half of it.
    let k = KernelSpec::lognormal(1.0, 0.0, 0.02).unwrap();
    for x in [1.0, 10.0] {
        let f = pair_split_integral(&k, x, x).unwrap().value;
        let approx = 0.02 * x / PI.sqrt();
        assert!((f / approx - 1.0).abs() < 0.05, "{f} vs {approx}");
    }
}

#[test]
fn homogeneous_without_salary() {
    let k = KernelSpec::lognormal(1.02, 0.0, 0.2).unwrap();
    let base = pair_split_integral(&k, 1.0, 1.2).unwrap().value;
    for c in [0.1, 7.0, 1000.0] {
        let f = pair_split_integral(&k, c, 1.2 * c).unwrap().value;
        assert!((f / c / base - 1.0).abs() < 1e-6, "c = {c}");
    }
}

#[test]
fn extremal_ratio_approaches_two_delta() {
    // Y[h] / (2 a delta) = sinh(delta) / delta = 1 + delta^2 / 6 + ...
    let h = DensityOnRay::extremal(1.5).unwrap();
    let mut prev = f64::INFINITY;
    for delta in [0.1, 0.01, 0.001] {
        let ratio = y_functional(&h, delta, Cutoff::Ignore).unwrap() / (2.0 * 1.5 * delta);
        assert!(ratio < prev);
        let excess = (ratio - 1.0) / (delta * delta);
        assert!((excess - 1.0 / 6.0).abs() < 0.02, "delta {delta}: {excess}");
        prev = ratio;
    }
    assert!((extremal_closed_form(1.0, 0.01) - 0.020000333335).abs() < 1e-12);
}

#[test]
fn cutoff_costs_the_boundary_window() {
    // With the cutoff respected the window below a is lost:
    // Y = a (e^delta - 1 - delta) smaller.
    let h = DensityOnRay::extremal(1.0).unwrap();
    for delta in [0.01, 0.1] {
        let full = y_functional(&h, delta, Cutoff::Ignore).unwrap();
        let cut = y_functional(&h, delta, Cutoff::Respect).unwrap();
        let lost = delta.exp() - 1.0 - delta;
        assert!((full - cut - lost).abs() < 1e-9, "delta {delta}");
    }
}

/// Share of the pushed-forward density with `|d log p / d log x| <= bound`,
/// for lognormal components without salary, by Simpson on a log grid.
fn mixture_mass_within(
    agents: &[f64],
    alpha: f64,
    gamma: f64,
    bound: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let (m, s) = log_params(alpha, gamma);
    let n = 200_000;
    let (a, b) = (lo.ln(), hi.ln());
    let h = (b - a) / n as f64;
    let (mut total, mut within) = (0.0, 0.0);
    for i in 0..=n {
        let u = a + i as f64 * h;
        let (mut p, mut dp) = (0.0, 0.0);
        for &xi in agents {
            let z = (u - m - xi.ln()) / s;
            let phi = (-0.5 * z * z).exp();
            p += phi;
            dp += phi * (-z / s);
        }
        // Density in x is p / x, so the log-derivative picks up a -1.
        let d = dp / p - 1.0;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        // Mass element p(x) dx = p(u) du up to a constant.
        total += w * p;
        if d.abs() <= bound {
            within += w * p;
        }
    }
    within / total
}

#[test]
fn propagation_single_agent() {
    let (alpha, gamma) = (1.02, 0.2);
    let k = KernelSpec::lognormal(alpha, 0.0, gamma).unwrap();
    let (_, s) = log_params(alpha, gamma);
    let claimed = 0.116;
    let bound = 1.0 / claimed;
    let pop = PopulationState::new(vec![1.0, 1.0], 0).unwrap();
    let r =
        density_log_derivative_propagation(&pop, &k, &log_grid(0.2, 5.0, 4000), claimed).unwrap();
    let n = std_normal();
    let exact = n.cdf(s * (bound - 1.0)) - n.cdf(-s * (bound + 1.0));
    assert!(
        (r.mass_within - exact).abs() < 2e-3,
        "{} vs {exact}",
        r.mass_within
    );
    assert!(!r.satisfied());
}

#[test]
fn propagation_two_component_mixture() {
    let (alpha, gamma) = (1.02, 0.2);
    let k = KernelSpec::lognormal(alpha, 0.0, gamma).unwrap();
    let agents = [1.0, 1.0, 1.0, 1.8];
    let pop = PopulationState::new(agents.to_vec(), 0).unwrap();
    for claimed in [0.05, 0.12, 0.2] {
        let r = density_log_derivative_propagation(&pop, &k, &log_grid(0.2, 8.0, 4000), claimed)
            .unwrap();
        let oracle = mixture_mass_within(&agents, alpha, gamma, 1.0 / claimed, 0.2, 8.0);
        assert!(
            (r.mass_within - oracle).abs() < 3e-3,
            "claimed {claimed}: {} vs {oracle}",
            r.mass_within
        );
    }
}

#[test]
fn propagation_rejects_coarse_grids() {
    let k = KernelSpec::lognormal(1.02, 0.0, 0.2).unwrap();
    let pop = PopulationState::new(vec![1.0, 3.0], 0).unwrap();
    let e = density_log_derivative_propagation(&pop, &k, &log_grid(0.9, 1.1, 50), 0.1).unwrap_err();
    assert!(matches!(e, AppendixError::GridTooCoarse { .. }));
}

#[test]
fn main_inequality_bound_uses_ensemble_tail() {
    let k = KernelSpec::lognormal(1.02, 0.0, 0.2).unwrap();
    let w: Vec<f64> = (1..=200).map(|i| (i as f64 / 40.0).exp()).collect();
    let pop = PopulationState::new(w.clone(), 0).unwrap();
    let params = BoundParams::new(0.25, 0.02, 0.05).unwrap();
    let r = main_inequality_check(&pop, &k, &params, 300, 3).unwrap();
    let mu = w.iter().sum::<f64>() / w.len() as f64;
    let p = tail_probability(&w, 0.25).unwrap();
    let rhs = 0.02 * 0.25 * mu * 0.05 * (1.0 - params.epsilon) * p * p;
    assert!((r.rhs - rhs).abs() < 1e-12 * rhs);
    assert!(r.satisfied());
    assert_eq!(r.pairs, 300);
}

#[test]
fn deterministic_kernel_fails_hypotheses() {
    let k = KernelSpec::deterministic(1.02, 0.0).unwrap();
    let pop = PopulationState::new(vec![1.0, 2.0], 0).unwrap();
    let params = BoundParams::new(0.25, 0.02, 0.05).unwrap();
    let e = main_inequality_check(&pop, &k, &params, 10, 0).unwrap_err();
    assert!(e.to_string().contains("hypotheses not met"));
}
