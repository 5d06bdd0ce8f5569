//! Finite-ensemble evolution of the wealth distribution.
//!
//! The population density is represented by `N` agents. One step moves every
//! agent independently through the transition kernel, which is a Monte Carlo
//! realization of the master equation. Agent `i` at step `t` draws only from
//! the stream keyed by `(seed, t, i)`, so results do not depend on how agents
//! are split across threads.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::{KernelError, KernelSpec};
use crate::metrics::{self, MetricsError, SnapshotMetrics};
use crate::rng::{Domain, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("invalid policy at t = {t}: {reason}")]
    InvalidPolicy { t: u64, reason: String },
    #[error("negative conditional mean {value} for agent {agent} at t = {t}")]
    NegativeConditionalMean { t: u64, agent: usize, value: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// The ensemble at one time index. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    wealth: Vec<f64>,
    t: u64,
}

impl PopulationState {
    pub fn new(wealth: Vec<f64>, t: u64) -> Result<Self, DynamicsError> {
        if wealth.len() < 2 {
            return Err(DynamicsError::InvalidPopulation(format!(
                "need at least 2 agents (got {})",
                wealth.len()
            )));
        }
        if let Some((i, v)) = wealth
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(DynamicsError::InvalidPopulation(format!(
                "agent {i} has wealth {v}; entries must be finite and >= 0"
            )));
        }
        Ok(Self { wealth, t })
    }

    pub fn wealth(&self) -> &[f64] {
        &self.wealth
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.wealth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wealth.is_empty()
    }

    pub fn mean(&self) -> f64 {
        metrics::mean(&self.wealth)
    }

    pub fn into_wealth(self) -> Vec<f64> {
        self.wealth
    }
}

/// A scalar coefficient as a function of the step index.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `(t_start, value)` pairs sorted by `t_start`; the value applies from
    /// `t_start` until the next entry. Steps before the first entry use the
    /// first value.
    Piecewise(Vec<(u64, f64)>),
}

impl Schedule {
    pub fn at(&self, t: u64) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Piecewise(steps) => {
                let idx = steps.partition_point(|&(start, _)| start <= t);
                steps[idx.saturating_sub(1)].1
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            Schedule::Constant(v) => vec![*v],
            Schedule::Piecewise(steps) => steps.iter().map(|&(_, v)| v).collect(),
        }
    }

    fn validate(&self, name: &str, min: f64) -> Result<(), String> {
        if let Schedule::Piecewise(steps) = self {
            if steps.is_empty() {
                return Err(format!("{name} schedule is empty"));
            }
            if steps.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(format!(
                    "{name} schedule start times must increase strictly"
                ));
            }
        }
        match self
            .values()
            .into_iter()
            .find(|v| !(v.is_finite() && *v >= min))
        {
            Some(v) => Err(format!("{name} must be >= {min} (got {v})")),
            None => Ok(()),
        }
    }
}

/// `gamma_t` as a function of `(t, mu_t)`.
pub type GammaFn = Arc<dyn Fn(u64, f64) -> f64 + Send + Sync>;
/// `zeta_t(x)` as a function of `(t, x, mu_t)`.
pub type ZetaFn = Arc<dyn Fn(u64, f64, f64) -> f64 + Send + Sync>;

/// How the conditional mean of the next wealth is set each step.
#[derive(Clone)]
pub enum GrowthPolicy {
    /// Mean `alpha_t x + beta_t` with scheduled coefficients.
    Linear { alpha: Schedule, beta: Schedule },
    /// Mean `alpha_t x + c mu_t`, where `mu_t` is the current ensemble mean.
    Proportional { alpha: Schedule, coefficient: f64 },
    /// Mean `gamma_t x + zeta_t(x)`, with `zeta_t` recentred to zero
    /// ensemble mean every step.
    General {
        gamma: GammaFn,
        zeta: ZetaFn,
        label: String,
    },
}

impl fmt::Debug for GrowthPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthPolicy::Linear { alpha, beta } => f
                .debug_struct("Linear")
                .field("alpha", alpha)
                .field("beta", beta)
                .finish(),
            GrowthPolicy::Proportional { alpha, coefficient } => f
                .debug_struct("Proportional")
                .field("alpha", alpha)
                .field("coefficient", coefficient)
                .finish(),
            GrowthPolicy::General { label, .. } => {
                f.debug_struct("General").field("label", label).finish()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    Linear,
    Proportional,
    General,
}

impl GrowthPolicy {
    /// Linear growth with the kernel's own constant coefficients.
    pub fn from_kernel(kernel: &KernelSpec) -> Self {
        GrowthPolicy::Linear {
            alpha: Schedule::Constant(kernel.alpha()),
            beta: Schedule::Constant(kernel.beta()),
        }
    }

    pub fn constant(alpha: f64, beta: f64) -> Self {
        GrowthPolicy::Linear {
            alpha: Schedule::Constant(alpha),
            beta: Schedule::Constant(beta),
        }
    }

    pub fn proportional(alpha: f64, coefficient: f64) -> Self {
        GrowthPolicy::Proportional {
            alpha: Schedule::Constant(alpha),
            coefficient,
        }
    }

    pub fn general(
        label: impl Into<String>,
        gamma: impl Fn(u64, f64) -> f64 + Send + Sync + 'static,
        zeta: impl Fn(u64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        GrowthPolicy::General {
            gamma: Arc::new(gamma),
            zeta: Arc::new(zeta),
            label: label.into(),
        }
    }

    /// A salary rewritten as general growth: `gamma = alpha + beta/mu`,
    /// `zeta(x) = beta (1 - x/mu)`.
    pub fn adaptation(alpha: Schedule, beta: Schedule) -> Self {
        let (a, b) = (alpha.clone(), beta.clone());
        Self::general(
            "adaptation",
            move |t, mu| a.at(t) + b.at(t) / mu,
            move |t, x, mu| beta.at(t) * (1.0 - x / mu),
        )
    }

    /// Flat-rate wealth tax redistributed equally: `zeta(x) = rate (mu - x)`.
    pub fn linear_tax(gamma: Schedule, rate: Schedule) -> Self {
        Self::general(
            "linear_tax",
            move |t, _| gamma.at(t),
            move |t, x, mu| rate.at(t) * (mu - x),
        )
    }

    pub fn mode(&self) -> PolicyMode {
        match self {
            GrowthPolicy::Linear { .. } => PolicyMode::Linear,
            GrowthPolicy::Proportional { .. } => PolicyMode::Proportional,
            GrowthPolicy::General { .. } => PolicyMode::General,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |reason: String| DynamicsError::InvalidPolicy { t: 0, reason };
        match self {
            GrowthPolicy::Linear { alpha, beta } => {
                alpha.validate("alpha", 1.0).map_err(bad)?;
                beta.validate("beta", 0.0).map_err(bad)
            }
            GrowthPolicy::Proportional { alpha, coefficient } => {
                alpha.validate("alpha", 1.0).map_err(bad)?;
                if !(coefficient.is_finite() && *coefficient >= 0.0) {
                    return Err(bad(format!(
                        "salary coefficient must be >= 0 (got {coefficient})"
                    )));
                }
                Ok(())
            }
            GrowthPolicy::General { .. } => Ok(()),
        }
    }

    /// `(alpha_t, beta_t)` for the linear modes at ensemble mean `mu`.
    pub fn linear_coefficients(&self, t: u64, mu: f64) -> Option<(f64, f64)> {
        match self {
            GrowthPolicy::Linear { alpha, beta } => Some((alpha.at(t), beta.at(t))),
            GrowthPolicy::Proportional { alpha, coefficient } => {
                Some((alpha.at(t), coefficient * mu))
            }
            GrowthPolicy::General { .. } => None,
        }
    }
}

/// Coefficients realized in one transition, for the bound checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepCoefficients {
    Linear {
        alpha: f64,
        beta: f64,
    },
    General {
        gamma: f64,
        /// Ensemble variance of the recentred `zeta`.
        var_zeta: f64,
        /// Ensemble covariance of wealth with the recentred `zeta`.
        cov_x_zeta: f64,
        /// `E|zeta(x) - zeta(y)|` over all ordered agent pairs.
        mad_zeta: f64,
    },
}

/// `mu_{t+1} = alpha mu_t + beta`.
pub fn mean_evolution(mu: f64, alpha: f64, beta: f64) -> f64 {
    alpha * mu + beta
}

/// Advance the ensemble by one step.
pub fn step(
    pop: &PopulationState,
    kernel: &KernelSpec,
    policy: &GrowthPolicy,
    seed: u64,
) -> Result<(PopulationState, StepCoefficients), DynamicsError> {
    let t = pop.t;
    let mu = pop.mean();
    let wealth = &pop.wealth;
    let (next, coefficients) = match policy {
        GrowthPolicy::Linear { .. } | GrowthPolicy::Proportional { .. } => {
            let (alpha, beta) = policy.linear_coefficients(t, mu).expect("linear mode");
            let k = kernel.with_coefficients(alpha, beta).map_err(|e| {
                DynamicsError::InvalidPolicy {
                    t,
                    reason: e.to_string(),
                }
            })?;
            let next: Vec<f64> = wealth
                .par_iter()
                .enumerate()
                .map(|(i, &x)| k.sample_unchecked(x, &mut Stream::transition(seed, t, i)))
                .collect();
            (next, StepCoefficients::Linear { alpha, beta })
        }
        GrowthPolicy::General { gamma, zeta, .. } => {
            let g = gamma(t, mu);
            if !g.is_finite() {
                return Err(DynamicsError::InvalidPolicy {
                    t,
                    reason: format!("gamma_t = {g} is not finite"),
                });
            }
            let mut z: Vec<f64> = wealth.iter().map(|&x| zeta(t, x, mu)).collect();
            if let Some((agent, &value)) = z.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(DynamicsError::InvalidPolicy {
                    t,
                    reason: format!("zeta is {value} for agent {agent}"),
                });
            }
            let zbar = metrics::mean(&z);
            z.iter_mut().for_each(|v| *v -= zbar);
            let targets: Vec<f64> = wealth.iter().zip(&z).map(|(&x, &zi)| g * x + zi).collect();
            if let Some((agent, &value)) = targets.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(DynamicsError::NegativeConditionalMean { t, agent, value });
            }
            let n = wealth.len() as f64;
            let var_zeta = z.iter().map(|v| v * v).sum::<f64>() / n;
            let cov_x_zeta = wealth
                .iter()
                .zip(&z)
                .map(|(&x, &zi)| (x - mu) * zi)
                .sum::<f64>()
                / n;
            let mad_zeta = metrics::mean_abs_difference(&z);
            let next: Vec<f64> = wealth
                .par_iter()
                .zip(targets.par_iter())
                .enumerate()
                .map(|(i, (&x, &m))| {
                    kernel.sample_with_mean(x, m, &mut Stream::transition(seed, t, i))
                })
                .collect();
            (
                next,
                StepCoefficients::General {
                    gamma: g,
                    var_zeta,
                    cov_x_zeta,
                    mad_zeta,
                },
            )
        }
    };
    Ok((
        PopulationState {
            wealth: next,
            t: t + 1,
        },
        coefficients,
    ))
}

/// Starting distribution of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    PointMass { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Lognormal { mean: f64, cv: f64 },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::PointMass { value: 1.0 }
    }
}

impl InitialCondition {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            InitialCondition::PointMass { value } if !(value.is_finite() && value > 0.0) => {
                Err(format!("point mass value must be > 0 (got {value})"))
            }
            InitialCondition::Uniform { lo, hi } if !(lo >= 0.0 && hi > lo && hi.is_finite()) => {
                Err(format!(
                    "uniform bounds need 0 <= lo < hi (got [{lo}, {hi}])"
                ))
            }
            InitialCondition::Lognormal { mean, cv }
                if !(mean.is_finite() && mean > 0.0 && cv.is_finite() && cv >= 0.0) =>
            {
                Err(format!(
                    "lognormal needs mean > 0 and cv >= 0 (got mean {mean}, cv {cv})"
                ))
            }
            _ => Ok(()),
        }
    }

    /// Draw `n` agents at `t = 0`. Agent `i` uses its own initial-domain
    /// stream.
    pub fn sample(&self, n: usize, seed: u64) -> Result<PopulationState, DynamicsError> {
        self.validate().map_err(DynamicsError::InvalidPopulation)?;
        let stream = |i: usize| Stream::new(seed, Domain::Initial, 0, i as u32);
        let wealth = match *self {
            InitialCondition::PointMass { value } => vec![value; n],
            InitialCondition::Uniform { lo, hi } => {
                (0..n).map(|i| stream(i).random_range(lo..hi)).collect()
            }
            InitialCondition::Lognormal { mean, cv } if cv == 0.0 => vec![mean; n],
            InitialCondition::Lognormal { mean, cv } => {
                let s2 = (1.0 + cv * cv).ln();
                let d =
                    LogNormal::new(mean.ln() - 0.5 * s2, s2.sqrt()).expect("validated lognormal");
                (0..n).map(|i| d.sample(&mut stream(i))).collect()
            }
        };
        PopulationState::new(wealth, 0)
    }
}

/// Everything needed to reproduce one trajectory.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub kernel: KernelSpec,
    pub policy: GrowthPolicy,
    pub initial: InitialCondition,
    pub agents: usize,
    pub steps: u64,
    pub seed: u64,
    pub kappas: Vec<f64>,
}

/// The state of a run right after a snapshot has been taken.
pub struct StepView<'a> {
    pub state: &'a PopulationState,
    /// Ascending copy of the wealth vector.
    pub sorted: &'a [f64],
    pub metrics: &'a SnapshotMetrics,
    /// The preceding snapshot and the coefficients that produced this one;
    /// `None` at `t = 0`.
    pub previous: Option<(&'a SnapshotMetrics, StepCoefficients)>,
}

fn snapshot(
    state: &PopulationState,
    kappas: &[f64],
) -> Result<(Vec<f64>, SnapshotMetrics), MetricsError> {
    let mut sorted = state.wealth.clone();
    metrics::sort_ascending(&mut sorted);
    let m = SnapshotMetrics::from_sorted(state.t, &sorted, kappas)?;
    Ok((sorted, m))
}

/// Run `spec.steps` transitions, calling `on_step` after every snapshot,
/// including the initial one. Returns the final population.
pub fn run<E, F>(spec: &RunSpec, mut on_step: F) -> Result<PopulationState, E>
where
    E: From<DynamicsError>,
    F: FnMut(&StepView<'_>) -> Result<(), E>,
{
    spec.policy.validate()?;
    let mut state = spec.initial.sample(spec.agents, spec.seed)?;
    let (sorted, mut current) = snapshot(&state, &spec.kappas).map_err(DynamicsError::from)?;
    on_step(&StepView {
        state: &state,
        sorted: &sorted,
        metrics: &current,
        previous: None,
    })?;
    for _ in 0..spec.steps {
        let (next, coefficients) = step(&state, &spec.kernel, &spec.policy, spec.seed)?;
        let (sorted, metrics) = snapshot(&next, &spec.kappas).map_err(DynamicsError::from)?;
        on_step(&StepView {
            state: &next,
            sorted: &sorted,
            metrics: &metrics,
            previous: Some((&current, coefficients)),
        })?;
        state = next;
        current = metrics;
    }
    Ok(state)
}

/// Run and keep only the snapshot metrics.
pub fn run_metrics(
    spec: &RunSpec,
) -> Result<(Vec<SnapshotMetrics>, PopulationState), DynamicsError> {
    let mut out = Vec::with_capacity(spec.steps as usize + 1);
    let last = run(spec, |v: &StepView<'_>| -> Result<(), DynamicsError> {
        out.push(v.metrics.clone());
        Ok(())
    })?;
    Ok((out, last))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop(w: &[f64]) -> PopulationState {
        PopulationState::new(w.to_vec(), 0).unwrap()
    }

    #[test]
    fn population_invariants() {
        assert!(PopulationState::new(vec![1.0], 0).is_err());
        assert!(PopulationState::new(vec![1.0, -0.5], 0).is_err());
        assert!(PopulationState::new(vec![1.0, f64::NAN], 0).is_err());
    }

    #[test]
    fn deterministic_steps() {
        let k = KernelSpec::deterministic(2.0, 0.0).unwrap();
        let (next, _) = step(
            &pop(&[1.0, 2.0, 3.0]),
            &k,
            &GrowthPolicy::from_kernel(&k),
            1,
        )
        .unwrap();
        assert_eq!(next.wealth(), &[2.0, 4.0, 6.0]);
        assert_eq!(next.t(), 1);
        let k = KernelSpec::deterministic(1.0, 1.0).unwrap();
        let (next, _) = step(&pop(&[0.0, 0.0]), &k, &GrowthPolicy::from_kernel(&k), 1).unwrap();
        assert_eq!(next.wealth(), &[1.0, 1.0]);
    }

    #[test]
    fn ensemble_mean_within_five_standard_errors() {
        let k = KernelSpec::lognormal(1.0, 0.0, 0.2).unwrap();
        let n = 100_000;
        let p = PopulationState::new(vec![1.0; n], 0).unwrap();
        let (next, _) = step(&p, &k, &GrowthPolicy::from_kernel(&k), 3).unwrap();
        assert!((next.mean() - 1.0).abs() < 5.0 * 0.2 / (n as f64).sqrt());
    }

    #[test]
    fn mean_evolution_examples() {
        assert!((mean_evolution(10.0, 1.05, 2.0) - 12.5).abs() < 1e-12);
        assert_eq!(mean_evolution(3.7, 1.0, 0.0), 3.7);
        assert_eq!(mean_evolution(0.0, 1.1, 3.0), 3.0);
    }

    #[test]
    fn schedules() {
        let s = Schedule::Piecewise(vec![(0, 1.0), (10, 2.0), (20, 0.5)]);
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(9), 1.0);
        assert_eq!(s.at(10), 2.0);
        assert_eq!(s.at(1000), 0.5);
        assert_eq!(Schedule::Piecewise(vec![(5, 3.0)]).at(0), 3.0);
        assert!(Schedule::Piecewise(vec![(5, 3.0), (5, 1.0)])
            .validate("beta", 0.0)
            .is_err());
        assert!(GrowthPolicy::constant(0.9, 0.0).validate().is_err());
        assert!(GrowthPolicy::proportional(1.0, -0.1).validate().is_err());
    }

    #[test]
    fn piecewise_beta_reaches_kernel() {
        let k = KernelSpec::deterministic(1.0, 0.0).unwrap();
        let policy = GrowthPolicy::Linear {
            alpha: Schedule::Constant(1.0),
            beta: Schedule::Piecewise(vec![(0, 0.0), (1, 2.0)]),
        };
        let (s1, _) = step(&pop(&[1.0, 1.0]), &k, &policy, 0).unwrap();
        let (s2, c) = step(&s1, &k, &policy, 0).unwrap();
        assert_eq!(s1.wealth(), &[1.0, 1.0]);
        assert_eq!(s2.wealth(), &[3.0, 3.0]);
        assert_eq!(
            c,
            StepCoefficients::Linear {
                alpha: 1.0,
                beta: 2.0
            }
        );
    }

    #[test]
    fn proportional_salary_uses_ensemble_mean() {
        let k = KernelSpec::deterministic(1.0, 0.0).unwrap();
        let (next, c) = step(
            &pop(&[0.0, 4.0]),
            &k,
            &GrowthPolicy::proportional(1.0, 0.5),
            0,
        )
        .unwrap();
        assert_eq!(
            c,
            StepCoefficients::Linear {
                alpha: 1.0,
                beta: 1.0
            }
        );
        assert_eq!(next.wealth(), &[1.0, 5.0]);
    }

    #[test]
    fn adaptation_matches_linear_on_deterministic_kernel() {
        let k = KernelSpec::deterministic(1.0, 0.0).unwrap();
        let linear = GrowthPolicy::constant(1.1, 0.7);
        let general = GrowthPolicy::adaptation(Schedule::Constant(1.1), Schedule::Constant(0.7));
        let mut a = pop(&[0.0, 0.3, 2.0, 9.5, 1.25]);
        let mut b = a.clone();
        for _ in 0..20 {
            a = step(&a, &k, &linear, 0).unwrap().0;
            b = step(&b, &k, &general, 0).unwrap().0;
            for (x, y) in a.wealth().iter().zip(b.wealth()) {
                assert!((x - y).abs() <= 1e-12 * x.max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn general_mode_recentres_zeta() {
        // zeta(x) = 1 everywhere recentres to zero: pure growth.
        let k = KernelSpec::deterministic(1.0, 0.0).unwrap();
        let policy = GrowthPolicy::general("shift", |_, _| 1.5, |_, _, _| 1.0);
        let (next, c) = step(&pop(&[1.0, 2.0]), &k, &policy, 0).unwrap();
        assert_eq!(next.wealth(), &[1.5, 3.0]);
        let StepCoefficients::General {
            var_zeta, mad_zeta, ..
        } = c
        else {
            unreachable!()
        };
        assert_eq!(var_zeta, 0.0);
        assert_eq!(mad_zeta, 0.0);
    }

    #[test]
    fn general_mode_rejects_negative_means() {
        let k = KernelSpec::lognormal(1.0, 0.0, 0.2).unwrap();
        let policy = GrowthPolicy::linear_tax(Schedule::Constant(1.0), Schedule::Constant(3.0));
        // zeta = 3 (mu - x): agent 2 with x = 10 gets 10 + 3 (4 - 10) < 0.
        let err = step(&pop(&[1.0, 1.0, 10.0, 4.0]), &k, &policy, 0).unwrap_err();
        assert!(
            matches!(err, DynamicsError::NegativeConditionalMean { agent: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn linear_tax_moments() {
        let k = KernelSpec::deterministic(1.0, 0.0).unwrap();
        let policy = GrowthPolicy::linear_tax(Schedule::Constant(1.0), Schedule::Constant(0.1));
        let (_, c) = step(&pop(&[1.0, 3.0]), &k, &policy, 0).unwrap();
        let StepCoefficients::General {
            var_zeta,
            cov_x_zeta,
            mad_zeta,
            ..
        } = c
        else {
            unreachable!()
        };
        assert!((var_zeta - 0.01).abs() < 1e-15);
        assert!((cov_x_zeta + 0.1).abs() < 1e-15);
        assert!((mad_zeta - 0.1).abs() < 1e-15);
    }

    #[test]
    fn initial_conditions() {
        let p = InitialCondition::default().sample(5, 0).unwrap();
        assert_eq!(p.wealth(), &[1.0; 5]);
        let u = InitialCondition::Uniform { lo: 2.0, hi: 3.0 }
            .sample(1000, 4)
            .unwrap();
        assert!(u.wealth().iter().all(|&v| (2.0..3.0).contains(&v)));
        let l = InitialCondition::Lognormal { mean: 2.0, cv: 0.5 }
            .sample(200_000, 4)
            .unwrap();
        assert!((l.mean() - 2.0).abs() < 5.0 * 1.0 / (200_000f64).sqrt());
        let cv = metrics::coefficient_of_variation(l.wealth()).unwrap();
        assert!((cv - 0.5).abs() < 0.01, "{cv}");
        assert!(InitialCondition::Uniform { lo: 3.0, hi: 2.0 }
            .sample(4, 0)
            .is_err());
    }

    #[test]
    fn zero_steps_yields_initial_snapshot() {
        let k = KernelSpec::lognormal(1.02, 0.0, 0.2).unwrap();
        let spec = RunSpec {
            policy: GrowthPolicy::from_kernel(&k),
            kernel: k,
            initial: InitialCondition::default(),
            agents: 10,
            steps: 0,
            seed: 1,
            kappas: vec![0.25],
        };
        let (traj, last) = run_metrics(&spec).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj[0].gini, 0.0);
        assert_eq!(last.t(), 0);
    }

    #[test]
    fn identity_dynamics_is_a_fixed_point() {
        let k = KernelSpec::deterministic(1.0, 0.0).unwrap();
        let spec = RunSpec {
            policy: GrowthPolicy::from_kernel(&k),
            kernel: k,
            initial: InitialCondition::Uniform { lo: 0.0, hi: 5.0 },
            agents: 50,
            steps: 100,
            seed: 9,
            kappas: vec![0.1, 0.25],
        };
        let (traj, _) = run_metrics(&spec).unwrap();
        for m in &traj[1..] {
            assert_eq!((m.mu, m.cv, m.gini), (traj[0].mu, traj[0].cv, traj[0].gini));
            assert_eq!(m.tail_probs, traj[0].tail_probs);
        }
    }
}
