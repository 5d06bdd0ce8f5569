//! Transition kernels `w(x -> x')`: conditional laws, sampling, and the
//! high-probability log-derivative constant.
//!
//!     cargo run --release --example transition_kernels

use wealthdyn::kernels::{ConditionalLaw, KernelSpec, ProbeAxis};
use wealthdyn::rng::{Domain, Stream};

fn main() {
    let kernels = [
        ("lognormal", KernelSpec::lognormal(1.02, 0.5, 0.2).unwrap()),
        ("gamma", KernelSpec::gamma(1.02, 0.5, 0.2).unwrap()),
        (
            "deterministic",
            KernelSpec::deterministic(1.02, 0.5).unwrap(),
        ),
    ];
    for (name, k) in &kernels {
        println!("== {name}");
        for x in [0.0, 1.0, 10.0] {
            match k.conditional_law(x).unwrap() {
                ConditionalLaw::PointMass(v) => println!("  x = {x}: point mass at {v}"),
                law => println!(
                    "  x = {x}: mean {:.4}  sd {:.4}  P(x' > mean) {:.4}",
                    law.mean(),
                    k.conditional_variance(x).sqrt(),
                    law.survival(law.mean())
                ),
            }
        }

        let mut rng = Stream::new(3, Domain::KernelProbe, 0, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| k.sample_transition(10.0, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        println!(
            "  sample mean at x = 10: {mean:.4} (exact {:.4})",
            k.conditional_mean(10.0)
        );

        if !k.has_density() {
            println!("  no density: log-derivative bounds undefined");
            continue;
        }
        let cal = k
            .calibrate_log_derivative_bound(1.0, 0.99, 20_000, &mut rng)
            .unwrap();
        println!(
            "  99% log-derivative bounds: input {:.3}  output {:.3}  -> gamma {:.5}",
            cal.delta_input,
            cal.delta_output,
            cal.gamma()
        );
        for axis in [ProbeAxis::Input, ProbeAxis::Output] {
            let m = k
                .high_probability_mass(1.0, cal.max_bound(), axis, 20_000, &mut rng)
                .unwrap();
            println!("  mass within bound on {axis:?}: {:.4}", m.within);
        }
    }
}
