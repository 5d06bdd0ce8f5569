//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! agents = 1000
//! steps = 100
//!
//! [kernel]
//! family = "lognormal"   # lognormal | gamma | deterministic
//! alpha = 1.02
//! beta = 0.0
//! gamma = 0.2
//!
//! [policy]
//! mode = "proportional"  # kernel | linear | proportional | adaptation | linear_tax
//! alpha = 1.02
//! c = 0.05
//! ```
//!
//! Every section except `[kernel]` is optional. Unknown keys are rejected.
//! See `examples/configs/` in the repository for the full schema.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::bounds::BoundParams;
use crate::dynamics::{GrowthPolicy, InitialCondition, RunSpec, Schedule};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::trajectory::{BoundSettings, SettingsError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScheduleSpec {
    Constant(f64),
    Piecewise(Vec<(u64, f64)>),
}

impl ScheduleSpec {
    fn build(&self) -> Schedule {
        match self {
            ScheduleSpec::Constant(v) => Schedule::Constant(*v),
            ScheduleSpec::Piecewise(p) => Schedule::Piecewise(p.clone()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    agents: usize,
    steps: u64,
    kernel: RawKernel,
    #[serde(default)]
    policy: RawPolicy,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    bounds: RawBounds,
    #[serde(default)]
    appendix: AppendixConfig,
    #[serde(default)]
    search: RawSearch,
    #[serde(default)]
    output: OutputConfig,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Family {
    Lognormal,
    Gamma,
    Deterministic,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    family: Family,
    alpha: f64,
    #[serde(default)]
    beta: f64,
    #[serde(default)]
    gamma: f64,
    delta_logx: Option<f64>,
    delta_logxp: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Empty {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearPolicy {
    alpha: ScheduleSpec,
    beta: ScheduleSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProportionalPolicy {
    alpha: ScheduleSpec,
    c: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxPolicy {
    gamma: ScheduleSpec,
    rate: ScheduleSpec,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum RawPolicy {
    Kernel(Empty),
    Linear(LinearPolicy),
    Proportional(ProportionalPolicy),
    Adaptation(LinearPolicy),
    LinearTax(TaxPolicy),
}

impl Default for RawPolicy {
    fn default() -> Self {
        RawPolicy::Kernel(Empty {})
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawInitial {
    PointMass { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Lognormal { mean: f64, cv: f64 },
}

impl Default for RawInitial {
    fn default() -> Self {
        RawInitial::PointMass { value: 1.0 }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    #[serde(default = "default_true")]
    enabled: bool,
    #[serde(default = "default_kappas")]
    kappas: Vec<f64>,
    #[serde(default = "default_kappa")]
    kappa: f64,
    #[serde(default = "default_delta")]
    delta: f64,
    log_derivative_gamma: Option<f64>,
    epsilon: Option<f64>,
    #[serde(default)]
    identify_gamma: bool,
    #[serde(default = "default_resamples")]
    bootstrap_resamples: usize,
    #[serde(default = "default_sigmas")]
    tolerance_sigmas: f64,
}

fn default_kappas() -> Vec<f64> {
    vec![0.1, 0.25]
}
fn default_kappa() -> f64 {
    0.25
}
fn default_delta() -> f64 {
    0.05
}
fn default_resamples() -> usize {
    32
}
fn default_sigmas() -> f64 {
    5.0
}

impl Default for RawBounds {
    fn default() -> Self {
        Self {
            enabled: true,
            kappas: default_kappas(),
            kappa: default_kappa(),
            delta: default_delta(),
            log_derivative_gamma: None,
            epsilon: None,
            identify_gamma: false,
            bootstrap_resamples: default_resamples(),
            tolerance_sigmas: default_sigmas(),
        }
    }
}

/// Settings of the appendix checks.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppendixConfig {
    /// Pairs sampled for the averaged pair-splitting bound.
    pub pairs: usize,
    pub diagonal_grid: Vec<f64>,
    /// Lower endpoint and window of the extremal functional.
    pub functional_a: f64,
    pub functional_delta: f64,
    pub trials: usize,
    /// Grid size of the density propagation check.
    pub propagation_points: usize,
}

impl Default for AppendixConfig {
    fn default() -> Self {
        Self {
            pairs: 2000,
            diagonal_grid: vec![1.0, 10.0, 100.0],
            functional_a: 1.0,
            functional_delta: 0.01,
            trials: 200,
            propagation_points: 400,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSearch {
    #[serde(default)]
    c_lo: f64,
    #[serde(default = "default_c_hi")]
    c_hi: f64,
    #[serde(default = "default_search_tol")]
    tol: f64,
    horizon: Option<u64>,
}

fn default_c_hi() -> f64 {
    0.1
}
fn default_search_tol() -> f64 {
    1e-3
}

impl Default for RawSearch {
    fn default() -> Self {
        Self {
            c_lo: 0.0,
            c_hi: default_c_hi(),
            tol: default_search_tol(),
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub c_lo: f64,
    pub c_hi: f64,
    pub tol: f64,
    pub horizon: u64,
}

/// Output paths; the `--out` flag overrides the one its subcommand writes.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub trajectory: Option<PathBuf>,
    pub final_population: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

/// How the log-derivative constant of the tail bounds is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice {
    Explicit(f64),
    Dispersion,
    Calibrate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsConfig {
    pub enabled: bool,
    pub kappas: Vec<f64>,
    pub kappa: f64,
    pub delta: f64,
    pub gamma: GammaChoice,
    pub bootstrap_resamples: usize,
    pub tolerance_sigmas: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub run: RunSpec,
    pub bounds: BoundsConfig,
    pub appendix: AppendixConfig,
    pub search: SearchConfig,
    pub output: OutputConfig,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

fn check_schedule(field: &str, s: &ScheduleSpec, min: f64, what: &str) -> Result<(), ConfigError> {
    let values: Vec<f64> = match s {
        ScheduleSpec::Constant(v) => vec![*v],
        ScheduleSpec::Piecewise(p) => {
            if p.is_empty() {
                return invalid(field, "schedule is empty");
            }
            if p.windows(2).any(|w| w[1].0 <= w[0].0) {
                return invalid(field, "schedule start times must increase strictly");
            }
            p.iter().map(|e| e.1).collect()
        }
    };
    match values.into_iter().find(|v| !(v.is_finite() && *v >= min)) {
        Some(v) => invalid(field, format!("{what} must be ≥ {min} (got {v})")),
        None => Ok(()),
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if raw.agents < 2 {
        return invalid(
            "agents",
            format!("need at least 2 agents (got {})", raw.agents),
        );
    }
    if raw.agents > u32::MAX as usize {
        return invalid("agents", "at most 2^32 - 1 agents");
    }

    let k = &raw.kernel;
    if !(k.alpha.is_finite() && k.alpha >= 1.0) {
        return invalid(
            "kernel.alpha",
            format!("alpha must be ≥ 1 (got {})", k.alpha),
        );
    }
    if !(k.beta.is_finite() && k.beta >= 0.0) {
        return invalid("kernel.beta", format!("beta must be ≥ 0 (got {})", k.beta));
    }
    let family = match k.family {
        Family::Lognormal => KernelFamily::LognormalMultiplicative,
        Family::Gamma => KernelFamily::GammaMultiplicative,
        Family::Deterministic => KernelFamily::Deterministic,
    };
    let kernel = KernelSpec::new(family, k.alpha, k.beta, k.gamma)
        .and_then(|s| s.with_log_derivative_bounds(k.delta_logx, k.delta_logxp))
        .or_else(|e| invalid("kernel", e.to_string()))?;

    let policy = match &raw.policy {
        RawPolicy::Kernel(_) => GrowthPolicy::from_kernel(&kernel),
        RawPolicy::Linear(p) | RawPolicy::Adaptation(p) => {
            check_schedule("policy.alpha", &p.alpha, 1.0, "alpha")?;
            check_schedule("policy.beta", &p.beta, 0.0, "beta")?;
            if matches!(raw.policy, RawPolicy::Linear(_)) {
                GrowthPolicy::Linear {
                    alpha: p.alpha.build(),
                    beta: p.beta.build(),
                }
            } else {
                GrowthPolicy::adaptation(p.alpha.build(), p.beta.build())
            }
        }
        RawPolicy::Proportional(p) => {
            check_schedule("policy.alpha", &p.alpha, 1.0, "alpha")?;
            if !(p.c.is_finite() && p.c >= 0.0) {
                return invalid("policy.c", format!("c must be ≥ 0 (got {})", p.c));
            }
            GrowthPolicy::Proportional {
                alpha: p.alpha.build(),
                coefficient: p.c,
            }
        }
        RawPolicy::LinearTax(p) => {
            check_schedule("policy.gamma", &p.gamma, 1.0, "gamma")?;
            check_schedule("policy.rate", &p.rate, 0.0, "rate")?;
            GrowthPolicy::linear_tax(p.gamma.build(), p.rate.build())
        }
    };

    let initial = match raw.initial {
        RawInitial::PointMass { value } => InitialCondition::PointMass { value },
        RawInitial::Uniform { lo, hi } => InitialCondition::Uniform { lo, hi },
        RawInitial::Lognormal { mean, cv } => InitialCondition::Lognormal { mean, cv },
    };
    if let Err(m) = initial.validate() {
        return invalid("initial", m);
    }

    let b = &raw.bounds;
    if b.kappas.is_empty() || b.kappas.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
        return invalid("bounds.kappas", "need at least one kappa, all > 0");
    }
    let gamma = match (b.log_derivative_gamma, b.epsilon) {
        (Some(g), Some(eps)) => {
            let implied = if g > 0.0 { b.delta / g } else { 0.0 };
            if (implied - eps).abs() > 1e-12 * implied.abs().max(1.0) {
                return invalid(
                    "bounds.epsilon",
                    format!("epsilon = delta / log_derivative_gamma = {implied}, not {eps}"),
                );
            }
            GammaChoice::Explicit(g)
        }
        (Some(g), None) => GammaChoice::Explicit(g),
        (None, Some(eps)) => {
            if !(eps > 0.0 && eps < 1.0) {
                return invalid(
                    "bounds.epsilon",
                    format!("epsilon must lie in (0, 1) (got {eps})"),
                );
            }
            GammaChoice::Explicit(b.delta / eps)
        }
        (None, None) if b.identify_gamma => GammaChoice::Dispersion,
        (None, None) => GammaChoice::Calibrate,
    };
    let explicit = match gamma {
        GammaChoice::Explicit(g) => g,
        _ => 0.0,
    };
    BoundParams::new(b.kappa, b.delta, explicit).or_else(|e| invalid("bounds", e.to_string()))?;
    if b.bootstrap_resamples < 2 {
        return invalid("bounds.bootstrap_resamples", "need at least 2 resamples");
    }
    if !(b.tolerance_sigmas >= 0.0) {
        return invalid("bounds.tolerance_sigmas", "must be ≥ 0");
    }

    let a = &raw.appendix;
    if a.pairs < 2 {
        return invalid("appendix.pairs", "need at least 2 pairs");
    }
    if a.diagonal_grid.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return invalid("appendix.diagonal_grid", "grid points must be > 0");
    }
    if !(a.functional_a > 0.0) {
        return invalid("appendix.functional_a", "must be > 0");
    }
    if !(a.functional_delta > 0.0 && a.functional_delta <= 0.05) {
        return invalid("appendix.functional_delta", "must lie in (0, 0.05]");
    }
    if a.propagation_points < 3 {
        return invalid("appendix.propagation_points", "need at least 3 points");
    }

    let s = &raw.search;
    let horizon = s.horizon.unwrap_or(raw.steps);
    if !(s.tol > 0.0) {
        return invalid("search.tol", "must be > 0");
    }
    if !(s.c_lo >= 0.0 && s.c_hi > s.c_lo && s.c_hi.is_finite()) {
        return invalid("search", "need 0 ≤ c_lo < c_hi");
    }
    if horizon < WINDOW_MIN {
        return invalid(
            "search.horizon",
            format!("need at least {WINDOW_MIN} steps"),
        );
    }

    Ok(RunConfig {
        run: RunSpec {
            kernel,
            policy,
            initial,
            agents: raw.agents,
            steps: raw.steps,
            seed: raw.seed,
            kappas: b.kappas.clone(),
        },
        bounds: BoundsConfig {
            enabled: b.enabled,
            kappas: b.kappas.clone(),
            kappa: b.kappa,
            delta: b.delta,
            gamma,
            bootstrap_resamples: b.bootstrap_resamples,
            tolerance_sigmas: b.tolerance_sigmas,
        },
        appendix: raw.appendix,
        search: SearchConfig {
            c_lo: s.c_lo,
            c_hi: s.c_hi,
            tol: s.tol,
            horizon,
        },
        output: raw.output,
    })
}

/// Shortest search horizon with a non-empty classification window.
const WINDOW_MIN: u64 = 10;

impl RunConfig {
    /// Replace the master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    /// Bound-evaluation settings for the configured kernel, or `None` when
    /// the checks are disabled.
    pub fn bound_settings(&self) -> Result<Option<BoundSettings>, SettingsError> {
        if !self.bounds.enabled {
            return Ok(None);
        }
        let b = &self.bounds;
        let (explicit, identify) = match b.gamma {
            GammaChoice::Explicit(g) => (Some(g), false),
            GammaChoice::Dispersion => (None, true),
            GammaChoice::Calibrate => (None, false),
        };
        let mut s = BoundSettings::for_kernel(
            &self.run.kernel,
            b.kappa,
            b.delta,
            explicit,
            identify,
            self.run.seed,
        )?;
        s.kappas = b.kappas.clone();
        s.bootstrap_resamples = b.bootstrap_resamples;
        s.tolerance_sigmas = b.tolerance_sigmas;
        Ok(Some(s))
    }
}
