//! Evaluate the CV and Gini growth inequalities along a run and tally how
//! often each holds.
//!
//!     cargo run --release --example bound_checks [beta]

use wealthdyn::dynamics::{DynamicsError, GrowthPolicy, InitialCondition, RunSpec};
use wealthdyn::kernels::KernelSpec;
use wealthdyn::trajectory::{simulate, BoundSettings, RECORD_CV_GROWTH};

fn main() {
    let beta: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1.0);
    let kernel = KernelSpec::lognormal(1.02, beta, 0.2).unwrap();
    let settings = BoundSettings::for_kernel(&kernel, 0.25, 0.01, None, false, 7).unwrap();
    println!(
        "log-derivative gamma {:.5} ({:?}), epsilon {:.3}, leak {:.4}",
        settings.params.gamma_logderiv,
        settings.gamma_source,
        settings.params.epsilon,
        settings.mass_leak
    );
    let spec = RunSpec {
        policy: GrowthPolicy::from_kernel(&kernel),
        kernel,
        initial: InitialCondition::PointMass { value: 1.0 },
        agents: 20_000,
        steps: 800,
        seed: 7,
        kappas: vec![0.1, 0.25],
    };

    let mut first_rows = 0;
    let outcome = simulate::<DynamicsError, _>(&spec, Some(&settings), |row| {
        if let (Some(r), true) = (row.report, first_rows < 3 && row.metrics.t > 0) {
            let rec = r.get(RECORD_CV_GROWTH).unwrap();
            println!(
                "t={} cv^2 step {:.6} vs bound {:.6} (tolerance {:.1e}): {}",
                r.t,
                rec.lhs,
                rec.rhs,
                rec.tolerance,
                rec.satisfied()
            );
            first_rows += 1;
        }
        Ok(())
    })
    .unwrap();

    println!(
        "{:<18} {:>9} {:>9} {:>9} {:>7} {:>14}",
        "record", "evaluated", "satisfied", "tolerated", "failed", "true->false"
    );
    for t in &outcome.tallies {
        println!(
            "{:<18} {:>9} {:>9} {:>9} {:>7} {:>14}",
            t.name, t.evaluated, t.satisfied, t.tolerated, t.failed, t.true_to_false
        );
    }
    println!("final gini {:.6}", outcome.final_metrics.gini);
}
