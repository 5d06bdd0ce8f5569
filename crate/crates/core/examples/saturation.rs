//! Multiplicative growth without salary: the Gini coefficient climbs towards
//! its finite-population ceiling `1 - 1/N` while the tail mass above
//! `kappa mu` drains away.
//!
//!     cargo run --release --example saturation [N] [T]

use wealthdyn::bounds::saturation_lower_bound;
use wealthdyn::dynamics::{run_metrics, GrowthPolicy, InitialCondition, RunSpec};
use wealthdyn::kernels::KernelSpec;

fn main() {
    let mut args = std::env::args().skip(1);
    let agents: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(600);

    let kernel = KernelSpec::lognormal(1.02, 0.0, 0.2).unwrap();
    let spec = RunSpec {
        policy: GrowthPolicy::from_kernel(&kernel),
        kernel,
        initial: InitialCondition::PointMass { value: 1.0 },
        agents,
        steps,
        seed: 7,
        kappas: vec![0.1, 0.25],
    };
    let (traj, _) = run_metrics(&spec).unwrap();

    println!(
        "{:>6} {:>10} {:>12} {:>10} {:>12}",
        "t", "gini", "cv", "P(>.25mu)", "chain bound"
    );
    for m in traj.iter().step_by((steps as usize / 12).max(1)) {
        let p = m.tail(0.25).unwrap();
        println!(
            "{:>6} {:>10.6} {:>12.3} {:>10.5} {:>12.6}",
            m.t,
            m.gini,
            m.cv,
            p,
            saturation_lower_bound(1.0 - p, 0.25)
        );
    }
    println!("ceiling 1 - 1/N = {:.6}", 1.0 - 1.0 / agents as f64);
}
