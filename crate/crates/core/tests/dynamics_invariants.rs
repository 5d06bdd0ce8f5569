//! Invariants of the simulated dynamics and of the concentration bounds.

use proptest::prelude::*;
use wealthdyn::bounds::{cv_halting_condition, min_salary_exact, saturation_lower_bound};
use wealthdyn::dynamics::{
    run, run_metrics, DynamicsError, GrowthPolicy, InitialCondition, RunSpec, Schedule,
};
use wealthdyn::kernels::{KernelFamily, KernelSpec};
use wealthdyn::metrics::{gini, tail_probability, SnapshotMetrics};

fn spec(
    family: KernelFamily,
    policy: GrowthPolicy,
    agents: usize,
    steps: u64,
    seed: u64,
) -> RunSpec {
    RunSpec {
        kernel: KernelSpec::new(family, 1.02, 0.0, 0.2).unwrap(),
        policy,
        initial: InitialCondition::Lognormal { mean: 1.0, cv: 0.5 },
        agents,
        steps,
        seed,
        kappas: vec![0.1, 0.25],
    }
}

fn final_bits(s: &RunSpec, threads: usize) -> Vec<u64> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let (_, state) = pool.install(|| run_metrics(s)).unwrap();
    state.wealth().iter().map(|w| w.to_bits()).collect()
}

#[test]
fn thread_count_does_not_change_results() {
    let policies = [
        GrowthPolicy::constant(1.02, 0.5),
        GrowthPolicy::proportional(1.02, 0.05),
        GrowthPolicy::linear_tax(Schedule::Constant(1.02), Schedule::Constant(0.03)),
    ];
    for family in [
        KernelFamily::LognormalMultiplicative,
        KernelFamily::GammaMultiplicative,
    ] {
        for p in &policies {
            let s = spec(family, p.clone(), 3000, 30, 5);
            assert_eq!(final_bits(&s, 1), final_bits(&s, 5), "{family:?} {p:?}");
        }
    }
}

#[test]
fn mean_tracks_the_recursion() {
    // mu_{t+1} = alpha mu_t + beta, within 5 standard errors per step.
    let s = spec(
        KernelFamily::GammaMultiplicative,
        GrowthPolicy::constant(1.02, 0.3),
        20_000,
        50,
        9,
    );
    let mut prev: Option<SnapshotMetrics> = None;
    run::<DynamicsError, _>(&s, |v| {
        if let Some(p) = &prev {
            let expected = 1.02 * p.mu + 0.3;
            let se = 0.2 * (p.sigma * p.sigma + p.mu * p.mu).sqrt() / (s.agents as f64).sqrt();
            assert!(
                (v.metrics.mu - expected).abs() < 5.0 * se,
                "t={}",
                v.metrics.t
            );
        }
        prev = Some(v.metrics.clone());
        Ok(())
    })
    .unwrap();
}

#[test]
fn gini_stays_below_its_finite_population_ceiling() {
    let s = spec(
        KernelFamily::LognormalMultiplicative,
        GrowthPolicy::constant(1.02, 0.0),
        200,
        600,
        1,
    );
    let (traj, state) = run_metrics(&s).unwrap();
    let ceiling = 1.0 - 1.0 / 200.0;
    assert!(traj
        .iter()
        .all(|m| (0.0..=ceiling + 1e-12).contains(&m.gini)));
    assert!(state.wealth().iter().all(|&w| w >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wealth_stays_nonnegative(
        seed in any::<u64>(),
        beta in 0.0..3.0f64,
        rate in 0.0..0.5f64,
        gamma_family in any::<bool>(),
    ) {
        let family = if gamma_family { KernelFamily::GammaMultiplicative } else { KernelFamily::LognormalMultiplicative };
        for policy in [
            GrowthPolicy::constant(1.02, beta),
            GrowthPolicy::linear_tax(Schedule::Constant(1.02), Schedule::Constant(rate)),
        ] {
            let (_, state) = run_metrics(&spec(family, policy, 200, 20, seed)).unwrap();
            prop_assert!(state.wealth().iter().all(|&w| w >= 0.0 && w.is_finite()));
        }
    }

    #[test]
    fn saturation_chain_holds_on_any_ensemble(
        w in prop::collection::vec(0.0..1e3f64, 2..200),
        kappa in 0.001..0.499f64,
    ) {
        prop_assume!(w.iter().any(|&x| x > 0.0));
        let g = gini(&w).unwrap();
        let p = tail_probability(&w, kappa).unwrap();
        prop_assert!(g >= saturation_lower_bound(1.0 - p, kappa));
    }

    #[test]
    fn tail_probability_decreases_in_kappa(
        w in prop::collection::vec(0.01..1e3f64, 2..100),
        k1 in 0.0..2.0f64,
        k2 in 0.0..2.0f64,
    ) {
        let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
        prop_assert!(tail_probability(&w, lo).unwrap() >= tail_probability(&w, hi).unwrap());
    }

    #[test]
    fn halting_slack_monotone(
        cv in 0.05..20.0f64,
        mu in 0.1..1e4f64,
        beta in 0.0..10.0f64,
        g in 0.01..0.5f64,
    ) {
        let s = |b: f64, gd: f64| cv_halting_condition(cv, 1.03, b, mu, gd).slack;
        prop_assert!(s(beta * 1.1 + 1e-3, g) > s(beta, g));
        prop_assert!(s(beta, g * 1.1) < s(beta, g));
    }

    #[test]
    fn exact_minimum_salary_sits_on_the_boundary(
        cv in 0.05..20.0f64,
        mu in 0.1..1e4f64,
        g in 0.01..0.5f64,
    ) {
        let b = min_salary_exact(cv, 1.03, mu, g);
        let c = cv_halting_condition(cv, 1.03, b, mu, g);
        prop_assert!(c.slack.abs() <= 1e-9 * c.rhs);
        prop_assert!(cv_halting_condition(cv, 1.03, b * 1.001, mu, g).satisfied);
        prop_assert!(!cv_halting_condition(cv, 1.03, b * 0.999, mu, g).satisfied);
    }
}
