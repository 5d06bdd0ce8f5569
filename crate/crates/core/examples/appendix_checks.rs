//! The pair-splitting integral and the bounds built on it: the diagonal
//! bound, the extremal functional, and the averaged inequality on a
//! simulated ensemble.
//!
//!     cargo run --release --example appendix_checks

use wealthdyn::appendix::{
    diagonal_bound_check, extremal_closed_form, extremal_minimality_check, main_inequality_check,
    pair_split_integral, y_functional, Cutoff, DensityOnRay,
};
use wealthdyn::bounds::BoundParams;
use wealthdyn::dynamics::{run_metrics, GrowthPolicy, InitialCondition, RunSpec};
use wealthdyn::kernels::KernelSpec;
use wealthdyn::rng::{Domain, Stream};

fn main() {
    let kernel = KernelSpec::lognormal(1.02, 0.0, 0.2).unwrap();
    for (x, y) in [(1.0, 1.0), (1.0, 1.3), (1.3, 1.0)] {
        let f = pair_split_integral(&kernel, x, y).unwrap();
        println!("F({x}, {y}) = {:.10} (+- {:.1e})", f.value, f.abs_err);
    }

    let mut rng = Stream::new(7, Domain::KernelProbe, 0, 0);
    let gamma = kernel
        .calibrate_log_derivative_bound(1.0, 0.99, 20_000, &mut rng)
        .unwrap()
        .gamma();
    let diag = diagonal_bound_check(&kernel, &[1.0, 10.0, 100.0], gamma).unwrap();
    for r in &diag.rows {
        println!(
            "x = {:>5}: F(x,x) = {:.6}  slack over gamma x / 2 = {:.6}",
            r.x, r.f_xx, r.slack_x
        );
    }

    for delta in [0.1f64, 0.01, 0.001] {
        let h = DensityOnRay::extremal(1.0).unwrap();
        let y = y_functional(&h, delta, Cutoff::Ignore).unwrap();
        println!(
            "delta {delta}: Y[h] = {y:.12} closed form {:.12} ratio to 2 a delta {:.8}",
            extremal_closed_form(1.0, delta),
            y / (2.0 * delta)
        );
    }
    let m = extremal_minimality_check(1.0, 0.01, 100, 7).unwrap();
    let worst = m
        .trials
        .iter()
        .map(|t| t.ratio)
        .fold(f64::INFINITY, f64::min);
    println!(
        "minimality: {} trials, {} excluded, worst Y[p]/Y[h] {worst:.5}, floor {:.5}",
        m.trials.len(),
        m.excluded,
        1.0 - m.constant * m.delta
    );

    // Averaged bound on an ensemble held stationary by a proportional salary.
    let c = 0.05;
    let spec = RunSpec {
        policy: GrowthPolicy::proportional(1.02, c),
        kernel: kernel.clone(),
        initial: InitialCondition::PointMass { value: 1.0 },
        agents: 20_000,
        steps: 400,
        seed: 7,
        kappas: vec![0.25],
    };
    let (_, pop) = run_metrics(&spec).unwrap();
    let step_kernel = kernel.with_coefficients(1.02, c * pop.mean()).unwrap();
    let params = BoundParams::new(0.25, 0.05, gamma).unwrap();
    let r = main_inequality_check(&pop, &step_kernel, &params, 500, 7).unwrap();
    println!(
        "E[F] = {:.4} +- {:.4} vs {:.6}: margin {:.1} standard errors",
        r.mean_f,
        r.std_err,
        r.rhs,
        r.margin_in_std_errs()
    );
}
