//! Scenario studies: saturation without salary, a constant salary, and a
//! salary proportional to mean wealth, plus the bisection search for the
//! smallest stabilizing proportional salary.

use std::fmt;
use std::sync::Mutex;

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{DynamicsError, GrowthPolicy, InitialCondition, RunSpec};
use crate::kernels::KernelSpec;
use crate::metrics::SnapshotMetrics;
use crate::trajectory::{self, BoundSettings, RunOutcome};

pub const DEFAULT_GROW_TOL: f64 = 0.005;
/// Horizon divided by this gives the classification window.
pub const WINDOW_FRACTION: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Diverging,
    Stabilized,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Diverging => "diverging",
            Verdict::Stabilized => "stabilized",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("trajectory too short: {len} snapshots, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("no sign change: c = {lo} is {lo_verdict}, c = {hi} is {hi_verdict}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        lo_verdict: Verdict,
        hi_verdict: Verdict,
    },
    #[error(
        "monotonicity violated: c = {stabilized} is stabilized but c = {diverging} is diverging"
    )]
    NonMonotone { stabilized: f64, diverging: f64 },
    #[error("inconclusive probe at c = {0}")]
    Inconclusive(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Mean of `values[from..to]`.
fn window_mean(values: &[f64], from: usize, to: usize) -> f64 {
    values[from..to].iter().sum::<f64>() / (to - from) as f64
}

/// Classify a Gini series by comparing the mean over the last `window`
/// points with the mean over the window before it.
///
/// A series pinned near its finite-population ceiling cannot grow by
/// `grow_tol` any more; it counts as diverging when the final value is above
/// 0.95 and the last window still sits above the previous one.
pub fn classify_gini(
    gini: &[f64],
    window: usize,
    grow_tol: f64,
) -> Result<Verdict, ExperimentError> {
    if window == 0 || gini.len() < 2 * window {
        return Err(ExperimentError::TooShort {
            len: gini.len(),
            needed: 2 * window.max(1),
        });
    }
    let n = gini.len();
    let last = window_mean(gini, n - window, n);
    let prev = window_mean(gini, n - 2 * window, n - window);
    let g = gini[n - 1];
    let growing = last - prev > grow_tol && g > 0.8;
    let saturated = g > 0.95 && last > prev;
    Ok(if growing || saturated {
        Verdict::Diverging
    } else if (last - prev).abs() < grow_tol && g < 0.95 {
        Verdict::Stabilized
    } else {
        Verdict::Inconclusive
    })
}

pub fn classify_trajectory(
    traj: &[SnapshotMetrics],
    window: usize,
    grow_tol: f64,
) -> Result<Verdict, ExperimentError> {
    let g: Vec<f64> = traj.iter().map(|m| m.gini).collect();
    classify_gini(&g, window, grow_tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySummary {
    pub min_gini: f64,
    pub max_gini: f64,
    pub final_gini: f64,
    pub min_cv: f64,
    pub max_cv: f64,
    pub final_cv: f64,
}

impl TrajectorySummary {
    pub fn of(traj: &[SnapshotMetrics]) -> Self {
        let last = traj.last().expect("non-empty trajectory");
        let fold = |f: fn(&SnapshotMetrics) -> f64| {
            traj.iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
        };
        let (min_gini, max_gini) = fold(|m| m.gini);
        let (min_cv, max_cv) = fold(|m| m.cv);
        Self {
            min_gini,
            max_gini,
            final_gini: last.gini,
            min_cv,
            max_cv,
            final_cv: last.cv,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub name: String,
    /// Salary setting, e.g. `beta=1` or `c=0.098`.
    pub parameter: String,
    pub final_metrics: SnapshotMetrics,
    pub summary: TrajectorySummary,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub parameter: String,
    pub spec: RunSpec,
}

/// Lognormal kernel with `alpha = 1.02`, `Gamma = 0.2`.
pub fn reference_kernel(beta: f64) -> KernelSpec {
    KernelSpec::lognormal(1.02, beta, 0.2).expect("valid reference kernel")
}

/// The three shipped scenarios on the reference kernel, all starting from
/// equal wealth 1.
pub fn shipped_scenarios(agents: usize, steps: u64, seed: u64) -> Vec<Scenario> {
    let base = reference_kernel(0.0);
    let (alpha, g) = (base.alpha(), base.gamma_disp());
    let c = 5.0 * g * g / (2.0 * alpha);
    let make = |name: &str, parameter: String, kernel: KernelSpec, policy: GrowthPolicy| Scenario {
        name: name.into(),
        parameter,
        spec: RunSpec {
            kernel,
            policy,
            initial: InitialCondition::PointMass { value: 1.0 },
            agents,
            steps,
            seed,
            kappas: vec![0.1, 0.25],
        },
    };
    let constant = reference_kernel(1.0);
    vec![
        make(
            "saturation",
            "beta=0".into(),
            base.clone(),
            GrowthPolicy::from_kernel(&base),
        ),
        make(
            "constant_salary",
            "beta=1".into(),
            constant.clone(),
            GrowthPolicy::from_kernel(&constant),
        ),
        make(
            "proportional",
            format!("c={c}"),
            base,
            GrowthPolicy::proportional(alpha, c),
        ),
    ]
}

/// A finished scenario with its full metric trajectory.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub result: ScenarioResult,
    pub trajectory: Vec<SnapshotMetrics>,
    pub outcome: RunOutcome,
}

/// Run a scenario, evaluating inequalities when `settings` is given, and
/// classify it with `window = steps / 5`.
pub fn run_scenario(
    scenario: &Scenario,
    settings: Option<&BoundSettings>,
) -> Result<ScenarioRun, ExperimentError> {
    let mut traj = Vec::with_capacity(scenario.spec.steps as usize + 1);
    let outcome = trajectory::simulate::<ExperimentError, _>(&scenario.spec, settings, |row| {
        traj.push(row.metrics.clone());
        Ok(())
    })?;
    let window = (scenario.spec.steps / WINDOW_FRACTION) as usize;
    let verdict = classify_trajectory(&traj, window, DEFAULT_GROW_TOL)?;
    Ok(ScenarioRun {
        result: ScenarioResult {
            name: scenario.name.clone(),
            parameter: scenario.parameter.clone(),
            final_metrics: outcome.final_metrics.clone(),
            summary: TrajectorySummary::of(&traj),
            verdict,
        },
        trajectory: traj,
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    /// Midpoint of the final bracket.
    pub threshold: f64,
    pub lo: f64,
    pub hi: f64,
    /// Every probe in evaluation order.
    pub probes: Vec<(f64, Verdict)>,
}

/// Bisect for the smallest stabilizing `c` of a classifier that is
/// diverging at `lo` and stabilized at `hi`.
///
/// `interior` extra points are probed in parallel with the endpoints; they
/// tighten the bracket and expose a non-monotone classifier before the
/// sequential bisection starts.
pub fn bisect_threshold<F>(
    lo: f64,
    hi: f64,
    tol: f64,
    interior: usize,
    classify: F,
) -> Result<ThresholdSearch, ExperimentError>
where
    F: Fn(f64) -> Result<Verdict, ExperimentError> + Sync,
{
    if !(tol > 0.0) || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(ExperimentError::InvalidInput(format!(
            "need lo < hi and tol > 0 (got lo={lo}, hi={hi}, tol={tol})"
        )));
    }
    let points: Vec<f64> = (0..interior + 2)
        .map(|i| lo + (hi - lo) * i as f64 / (interior + 1) as f64)
        .collect();
    let verdicts = points
        .par_iter()
        .map(|&c| classify(c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut probes: Vec<(f64, Verdict)> = points
        .iter()
        .copied()
        .zip(verdicts.iter().copied())
        .collect();
    let (v_lo, v_hi) = (verdicts[0], verdicts[verdicts.len() - 1]);
    if v_lo != Verdict::Diverging || v_hi != Verdict::Stabilized {
        return Err(ExperimentError::NoSignChange {
            lo,
            hi,
            lo_verdict: v_lo,
            hi_verdict: v_hi,
        });
    }
    let first_stable = probes
        .iter()
        .position(|p| p.1 == Verdict::Stabilized)
        .unwrap();
    if let Some(d) = probes[first_stable..]
        .iter()
        .find(|p| p.1 == Verdict::Diverging)
    {
        return Err(ExperimentError::NonMonotone {
            stabilized: probes[first_stable].0,
            diverging: d.0,
        });
    }
    if let Some(p) = probes.iter().find(|p| p.1 == Verdict::Inconclusive) {
        return Err(ExperimentError::Inconclusive(p.0));
    }
    let (mut a, mut b) = (probes[first_stable - 1].0, probes[first_stable].0);
    while b - a >= tol {
        let mid = 0.5 * (a + b);
        let v = classify(mid)?;
        probes.push((mid, v));
        match v {
            Verdict::Diverging => a = mid,
            Verdict::Stabilized => b = mid,
            Verdict::Inconclusive => return Err(ExperimentError::Inconclusive(mid)),
        }
    }
    Ok(ThresholdSearch {
        threshold: 0.5 * (a + b),
        lo: a,
        hi: b,
        probes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub search: ThresholdSearch,
    /// Mean CV over the last window of the stabilized run at the upper end
    /// of the final bracket.
    pub plateau_cv: f64,
    /// `Gamma^2 / (2 alpha) * (1 + 1 / CV^2)` at the plateau CV.
    pub scale: f64,
}

impl ThresholdReport {
    pub fn ratio(&self) -> f64 {
        self.search.threshold / self.scale
    }
}

/// Interior points probed alongside the bracket ends.
const BRACKET_INTERIOR: usize = 2;

/// Search for the smallest `c` such that `beta_t = c mu_t` stabilizes the
/// Gini coefficient, running `base` with a proportional policy and `steps =
/// horizon` at every probe. The kernel of `base` supplies `alpha` and
/// `Gamma`; its seed is kept fixed so each probe is deterministic in `c`.
pub fn find_min_stabilizing_salary_fraction(
    base: &RunSpec,
    c_lo: f64,
    c_hi: f64,
    tol: f64,
    horizon: u64,
) -> Result<ThresholdReport, ExperimentError> {
    let alpha = base.kernel.alpha();
    let g = base.kernel.gamma_disp();
    let window = (horizon / WINDOW_FRACTION) as usize;
    let plateaus = Mutex::new(Vec::<(f64, f64)>::new());
    let classify = |c: f64| -> Result<Verdict, ExperimentError> {
        let spec = RunSpec {
            policy: GrowthPolicy::proportional(alpha, c),
            steps: horizon,
            ..base.clone()
        };
        let (traj, _) = crate::dynamics::run_metrics(&spec)?;
        let verdict = classify_trajectory(&traj, window, DEFAULT_GROW_TOL)?;
        if verdict == Verdict::Stabilized {
            let cv: Vec<f64> = traj.iter().map(|m| m.cv).collect();
            let plateau = window_mean(&cv, cv.len() - window, cv.len());
            plateaus.lock().unwrap().push((c, plateau));
        }
        Ok(verdict)
    };
    let search = bisect_threshold(c_lo, c_hi, tol, BRACKET_INTERIOR, classify)?;
    let plateau_cv = plateaus
        .into_inner()
        .unwrap()
        .into_iter()
        .find(|&(c, _)| c == search.hi)
        .map(|(_, cv)| cv)
        .expect("the upper bracket end was classified stabilized");
    Ok(ThresholdReport {
        scale: g * g / (2.0 * alpha) * (1.0 + 1.0 / (plateau_cv * plateau_cv)),
        plateau_cv,
        search,
    })
}
