//! Per-step inequality evaluation along a simulated trajectory.
//!
//! Row `t` carries the state-level records for snapshot `t` and the
//! transition records for the step `t-1 -> t`. The record set depends only on
//! the policy mode and the tail grid, so every row of a run has the same
//! columns; records that do not apply to a row (transitions at `t = 0`) are
//! simply absent.

use crate::bounds::{self, BoundParams, BoundReport, InequalityRecord, RecordKind};
use crate::dynamics::{
    self, DynamicsError, GrowthPolicy, PolicyMode, PopulationState, RunSpec, StepCoefficients,
    StepView,
};
use crate::kernels::{KernelError, KernelSpec, ProbeAxis};
use crate::metrics::{self, SnapshotMetrics};
use crate::rng::{Domain, Stream};

/// Mass at which the log-derivative constant is calibrated when none is given.
pub const DEFAULT_CALIBRATION_MASS: f64 = 0.99;
const CALIBRATION_SAMPLES: usize = 20_000;

/// Where the log-derivative constant of the tail bounds came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSource {
    Explicit,
    /// Identified with the kernel's relative dispersion.
    Dispersion,
    /// Empirical quantile of the probe magnitudes at the given mass.
    Calibrated {
        mass: f64,
    },
    /// No density: the tail bounds degenerate to zero.
    NoDensity,
}

#[derive(Debug, Clone)]
pub struct BoundSettings {
    pub params: BoundParams,
    pub gamma_source: GammaSource,
    /// Relative dispersion of the kernel.
    pub gamma_disp: f64,
    /// Grid for the saturation chain; entries `>= 1/2` are skipped.
    pub kappas: Vec<f64>,
    pub bootstrap_resamples: usize,
    /// Tolerance of statistical checks, in bootstrap standard errors.
    pub tolerance_sigmas: f64,
    /// Conditional mass where the claimed log-derivative bound fails.
    pub mass_leak: f64,
    pub seed: u64,
}

pub const RECORD_CV_GROWTH: &str = "cv_growth";
pub const RECORD_CV_HALTING: &str = "cv_halting";
pub const RECORD_GINI_GROWTH: &str = "gini_growth";
pub const RECORD_GINI_HALTING: &str = "gini_halting";
pub const RECORD_GENERAL_CV: &str = "general_cv";
pub const RECORD_ZETA_VARIABILITY: &str = "zeta_variability";

pub fn saturation_record_name(kappa: f64) -> String {
    format!("saturation_k{kappa}")
}

impl BoundSettings {
    /// Settings for `kernel` with the log-derivative constant taken from
    /// `explicit`, from the dispersion when `identify` is set, or otherwise
    /// calibrated at [`DEFAULT_CALIBRATION_MASS`].
    pub fn for_kernel(
        kernel: &KernelSpec,
        kappa: f64,
        delta: f64,
        explicit: Option<f64>,
        identify: bool,
        seed: u64,
    ) -> Result<Self, SettingsError> {
        let mut rng = Stream::new(seed, Domain::KernelProbe, 0, 0);
        let (gamma, source) = match (explicit, identify, kernel.has_density()) {
            (Some(g), _, _) => (g, GammaSource::Explicit),
            (None, _, false) => (0.0, GammaSource::NoDensity),
            (None, true, true) => (kernel.gamma_disp(), GammaSource::Dispersion),
            (None, false, true) => {
                let cal = kernel.calibrate_log_derivative_bound(
                    1.0,
                    DEFAULT_CALIBRATION_MASS,
                    CALIBRATION_SAMPLES,
                    &mut rng,
                )?;
                (cal.gamma(), GammaSource::Calibrated { mass: cal.mass })
            }
        };
        let mass_leak = if kernel.has_density() && gamma > 0.0 {
            let mut worst: f64 = 0.0;
            for axis in [ProbeAxis::Input, ProbeAxis::Output] {
                let m = kernel.high_probability_mass(
                    1.0,
                    1.0 / gamma,
                    axis,
                    CALIBRATION_SAMPLES,
                    &mut rng,
                )?;
                worst = worst.max(1.0 - m.within);
            }
            worst
        } else {
            0.0
        };
        Ok(Self {
            params: BoundParams::new(kappa, delta, gamma)?,
            gamma_source: source,
            gamma_disp: kernel.gamma_disp(),
            kappas: vec![0.1, 0.25],
            bootstrap_resamples: 32,
            tolerance_sigmas: 5.0,
            mass_leak,
            seed,
        })
    }

    fn saturation_kappas(&self) -> impl Iterator<Item = f64> + '_ {
        self.kappas.iter().copied().filter(|&k| k > 0.0 && k < 0.5)
    }

    /// Record names, in column order, for a run under `mode`.
    pub fn record_names(&self, mode: PolicyMode) -> Vec<String> {
        let mut names: Vec<String> = match mode {
            PolicyMode::Linear | PolicyMode::Proportional => [
                RECORD_CV_GROWTH,
                RECORD_CV_HALTING,
                RECORD_GINI_GROWTH,
                RECORD_GINI_HALTING,
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            PolicyMode::General => [RECORD_GENERAL_CV, RECORD_ZETA_VARIABILITY]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        };
        names.extend(self.saturation_kappas().map(saturation_record_name));
        names
    }

    /// Tail grid the snapshots must carry: the saturation grid plus the
    /// bound parameter's own threshold.
    pub fn required_kappas(&self) -> Vec<f64> {
        let mut k = self.kappas.clone();
        if !k.contains(&self.params.kappa) {
            k.push(self.params.kappa);
        }
        k
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Bounds(#[from] bounds::BoundsError),
}

/// Evaluate all records for one snapshot.
pub fn evaluate(
    view: &StepView<'_>,
    policy: &GrowthPolicy,
    settings: &BoundSettings,
) -> BoundReport {
    let m = view.metrics;
    let p = &settings.params;
    let mut records = Vec::new();
    let tail = |s: &SnapshotMetrics| {
        s.tail(p.kappa)
            .expect("snapshot carries the bound threshold")
    };

    match (policy.linear_coefficients(m.t, m.mu), view.previous) {
        (Some((alpha, beta)), prev) => {
            if let Some((
                before,
                StepCoefficients::Linear {
                    alpha: a0,
                    beta: b0,
                },
            )) = prev
            {
                let cv2 = m.cv * m.cv;
                let rhs = bounds::cv_growth_lower_bound(
                    before.cv,
                    a0,
                    b0,
                    before.mu,
                    settings.gamma_disp,
                );
                records.push(InequalityRecord::at_least(
                    RECORD_CV_GROWTH,
                    RecordKind::Check,
                    cv2,
                    rhs,
                ));
                let rhs = bounds::gini_growth_lower_bound(
                    before.gini,
                    b0,
                    before.mu,
                    m.mu,
                    p,
                    tail(before),
                );
                records.push(InequalityRecord::at_least(
                    RECORD_GINI_GROWTH,
                    RecordKind::Check,
                    m.gini - before.gini,
                    rhs,
                ));
            }
            let c = bounds::cv_halting_condition(m.cv, alpha, beta, m.mu, settings.gamma_disp);
            records.push(InequalityRecord::at_least(
                RECORD_CV_HALTING,
                RecordKind::Diagnostic,
                c.lhs,
                c.rhs,
            ));
            records.push(InequalityRecord::at_most(
                RECORD_GINI_HALTING,
                RecordKind::Diagnostic,
                tail(m),
                bounds::gini_halting_tail_bound(m.gini, beta, m.mu, p),
            ));
        }
        (
            None,
            Some((
                before,
                StepCoefficients::General {
                    gamma,
                    var_zeta,
                    cov_x_zeta,
                    mad_zeta,
                },
            )),
        ) => {
            let c = bounds::general_cv_condition(
                gamma,
                before.mu,
                before.cv,
                var_zeta,
                cov_x_zeta,
                settings.gamma_disp,
            );
            records.push(InequalityRecord::at_most(
                RECORD_GENERAL_CV,
                RecordKind::Diagnostic,
                c.lhs,
                c.rhs,
            ));
            records.push(InequalityRecord::at_least(
                RECORD_ZETA_VARIABILITY,
                RecordKind::Diagnostic,
                mad_zeta,
                bounds::zeta_variability_lower_bound(p, before.mu, tail(before)),
            ));
        }
        (None, _) => {}
    }

    for k in settings.saturation_kappas() {
        let complement = 1.0 - m.tail(k).expect("snapshot carries the saturation grid");
        records.push(
            InequalityRecord::at_least(
                saturation_record_name(k),
                RecordKind::Check,
                m.gini,
                bounds::saturation_lower_bound(complement, k),
            )
            .with_tolerance(0.0),
        );
    }

    // Statistical tolerances are only needed, and only paid for, when a
    // check is violated outright.
    let needs_bootstrap = records
        .iter()
        .any(|r| !r.satisfied() && (r.name == RECORD_CV_GROWTH || r.name == RECORD_GINI_GROWTH));
    let errors = needs_bootstrap.then(|| {
        metrics::bootstrap_errors(
            view.sorted,
            settings.bootstrap_resamples,
            settings.seed,
            m.t as u32,
        )
    });
    for r in &mut records {
        let tolerance = match (r.name.as_str(), errors) {
            (RECORD_CV_GROWTH, Some(e)) => settings.tolerance_sigmas * e.cv2,
            (RECORD_GINI_GROWTH, Some(e)) => {
                settings.tolerance_sigmas * e.gini + settings.mass_leak * r.rhs.abs()
            }
            (RECORD_CV_GROWTH | RECORD_GINI_GROWTH, None) => f64::NAN,
            _ => continue,
        };
        r.tolerance = tolerance;
    }
    BoundReport { t: m.t, records }
}

/// Running counts for one record over a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckTally {
    pub name: String,
    pub kind: RecordKind,
    pub evaluated: u64,
    pub satisfied: u64,
    /// Violations absorbed by the declared tolerance.
    pub tolerated: u64,
    /// Violations beyond the tolerance.
    pub failed: u64,
    pub first_failure: Option<u64>,
    /// Times the satisfied flag changed from true to false.
    pub true_to_false: u64,
    pub last_satisfied_at: Option<u64>,
    last: Option<bool>,
}

impl CheckTally {
    fn new(name: &str, kind: RecordKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            evaluated: 0,
            satisfied: 0,
            tolerated: 0,
            failed: 0,
            first_failure: None,
            true_to_false: 0,
            last_satisfied_at: None,
            last: None,
        }
    }

    fn add(&mut self, t: u64, r: &InequalityRecord) {
        self.evaluated += 1;
        let ok = r.satisfied();
        if ok {
            self.satisfied += 1;
            self.last_satisfied_at = Some(t);
        } else if r.within_tolerance() {
            self.tolerated += 1;
        } else {
            self.failed += 1;
            self.first_failure.get_or_insert(t);
        }
        if self.last == Some(true) && !ok {
            self.true_to_false += 1;
        }
        self.last = Some(ok);
    }

    pub fn satisfied_fraction(&self) -> f64 {
        self.satisfied as f64 / self.evaluated.max(1) as f64
    }
}

/// One emitted row.
pub struct TrajectoryRow<'a> {
    pub state: &'a PopulationState,
    pub metrics: &'a SnapshotMetrics,
    pub report: Option<&'a BoundReport>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: PopulationState,
    pub final_metrics: SnapshotMetrics,
    pub tallies: Vec<CheckTally>,
}

impl RunOutcome {
    pub fn tally(&self, name: &str) -> Option<&CheckTally> {
        self.tallies.iter().find(|t| t.name == name)
    }

    /// Checks (not diagnostics) with violations beyond tolerance.
    pub fn failed_checks(&self) -> Vec<&CheckTally> {
        self.tallies
            .iter()
            .filter(|t| t.kind == RecordKind::Check && t.failed > 0)
            .collect()
    }
}

/// Run `spec`, evaluating inequalities when `settings` is given, and pass
/// each row to `on_row` as soon as it is ready.
pub fn simulate<E, F>(
    spec: &RunSpec,
    settings: Option<&BoundSettings>,
    mut on_row: F,
) -> Result<RunOutcome, E>
where
    E: From<DynamicsError>,
    F: FnMut(&TrajectoryRow<'_>) -> Result<(), E>,
{
    let mut spec = spec.clone();
    if let Some(s) = settings {
        for k in s.required_kappas() {
            if !spec.kappas.contains(&k) {
                spec.kappas.push(k);
            }
        }
    }
    let mut tallies: Vec<CheckTally> = Vec::new();
    let mut final_metrics = None;
    let final_state = dynamics::run(&spec, |view: &StepView<'_>| -> Result<(), E> {
        let report = settings.map(|s| evaluate(view, &spec.policy, s));
        if let Some(report) = &report {
            for r in &report.records {
                let idx = match tallies.iter().position(|t| t.name == r.name) {
                    Some(i) => i,
                    None => {
                        tallies.push(CheckTally::new(&r.name, r.kind));
                        tallies.len() - 1
                    }
                };
                tallies[idx].add(report.t, r);
            }
        }
        on_row(&TrajectoryRow {
            state: view.state,
            metrics: view.metrics,
            report: report.as_ref(),
        })?;
        final_metrics = Some(view.metrics.clone());
        Ok(())
    })?;
    Ok(RunOutcome {
        final_state,
        final_metrics: final_metrics.expect("at least the initial snapshot"),
        tallies,
    })
}
