//! Gini coefficient and CV of a wealth sample, with bootstrap errors.
//!
//!     cargo run --release --example gini_estimator [N]

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use wealthdyn::metrics::{self, bootstrap_errors, SnapshotMetrics};
use wealthdyn::rng::{Domain, Stream};

fn main() {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100_000);

    // Small vectors where the answer is known by hand.
    for w in [
        vec![1.0, 2.0, 3.0, 4.0],
        vec![5.0, 5.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ] {
        println!("{w:?}: gini {}", metrics::gini(&w).unwrap());
    }

    // The O(N log N) estimator agrees with the all-pairs definition.
    let mut rng = Stream::new(1, Domain::Initial, 0, 0);
    let small: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..10.0)).collect();
    println!(
        "sorted ranks {:.15}  all pairs {:.15}",
        metrics::gini(&small).unwrap(),
        metrics::gini_pairwise_oracle(&small).unwrap()
    );

    // Lognormal sample: G = 2 Phi(s / sqrt 2) - 1 in the large-N limit.
    let s = 1.0;
    let d = LogNormal::new(0.0, s).unwrap();
    let mut w: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
    metrics::sort_ascending(&mut w);
    let m = SnapshotMetrics::from_sorted(0, &w, &[0.1, 0.25, 1.0]).unwrap();
    let exact = libm_erf(s / 2.0);
    let se = bootstrap_errors(&w, 64, 7, 0);
    println!("N = {n}");
    println!("gini {:.5} +- {:.5} (limit {:.5})", m.gini, se.gini, exact);
    println!(
        "cv^2 {:.4} +- {:.4} (limit {:.4})",
        m.cv * m.cv,
        se.cv2,
        s.powi(2).exp() - 1.0
    );
    for (k, p) in &m.tail_probs {
        println!("P(x > {k} mu) = {p:.4}");
    }
}

/// `2 Phi(s / sqrt 2) - 1 = erf(s / 2)`.
fn libm_erf(x: f64) -> f64 {
    statrs::function::erf::erf(x)
}
