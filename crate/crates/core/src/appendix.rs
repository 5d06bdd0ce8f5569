//! Numerical checks of the tail-mass machinery behind the Gini growth bound.
//!
//! The central object is the pair-splitting integral
//! `F(x, y) = E[(Y' - X')_+]` for independent `X' ~ w(x -> .)` and
//! `Y' ~ w(y -> .)`, i.e. the part of the expected absolute difference
//! where the second agent ends up richer. The checks here evaluate it by
//! nested quadrature and test the chain of lower bounds built on it:
//! the diagonal bound `F(x, x) >= Gamma x / 2`, the extremal functional on
//! densities over a half-line, the averaged bound
//! `E[F] >= delta kappa mu Gamma (1 - eps) P^2`, and the propagation of a
//! log-derivative bound from the kernel to the evolved density.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::BoundParams;
use crate::dynamics::PopulationState;
use crate::kernels::{ConditionalLaw, KernelError, KernelSpec, LOG_PROBE_STEP};
use crate::metrics::{self, MetricsError};
use crate::quadrature::{integrate_with_breaks, QuadError, QuadOptions};
use crate::rng::{Domain, Stream};

/// Each conditional law is truncated at this upper-tail mass.
pub const TAIL_MASS: f64 = 1e-10;
/// Relative error target of the nested pair-splitting quadrature.
pub const PAIR_SPLIT_REL_TOL: f64 = 1e-7;
/// Declared constant in `Y[p] >= Y[h] (1 - C delta)`.
pub const MINIMALITY_CONSTANT: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppendixError {
    #[error("hypotheses not met: the kernel has no density")]
    NoDensity,
    #[error(transparent)]
    Kernel(KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("density is not normalized: total mass {0}")]
    NotNormalized(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("grid too coarse: {detail}; try at least {suggested_points} points")]
    GridTooCoarse {
        detail: String,
        suggested_points: usize,
    },
}

impl From<KernelError> for AppendixError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::NoDensity => AppendixError::NoDensity,
            other => AppendixError::Kernel(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSplit {
    pub value: f64,
    pub abs_err: f64,
}

fn breakpoints(law: &ConditionalLaw, from: f64) -> Option<Vec<f64>> {
    let (lo, hi) = law.truncated_support(TAIL_MASS);
    let start = from.max(lo);
    if start >= hi {
        return None;
    }
    let mut pts = vec![start];
    pts.extend(law.landmarks().into_iter().filter(|&p| p > start && p < hi));
    pts.push(hi);
    Some(pts)
}

/// `E[(Y' - k)_+]` by quadrature over the conditional law of `Y'`.
fn upper_partial_mean(
    law: &ConditionalLaw,
    k: f64,
    opts: QuadOptions,
) -> Result<PairSplit, QuadError> {
    match *law {
        ConditionalLaw::PointMass(v) => Ok(PairSplit {
            value: (v - k).max(0.0),
            abs_err: 0.0,
        }),
        ConditionalLaw::Scaled { .. } => match breakpoints(law, k) {
            None => Ok(PairSplit {
                value: 0.0,
                abs_err: 0.0,
            }),
            Some(pts) => {
                let r = integrate_with_breaks(|t| (t - k) * law.pdf(t), &pts, opts)?;
                Ok(PairSplit {
                    value: r.value,
                    abs_err: r.abs_err,
                })
            }
        },
    }
}

/// `F(x, y) = E[(Y' - X')_+]` by nested adaptive quadrature, with absolute
/// target `1e-7 * (alpha max(x, y) + beta)`.
pub fn pair_split_integral(
    kernel: &KernelSpec,
    x: f64,
    y: f64,
) -> Result<PairSplit, AppendixError> {
    if !kernel.has_density() {
        return Err(AppendixError::NoDensity);
    }
    let lx = kernel.conditional_law(x)?;
    let ly = kernel.conditional_law(y)?;
    let scale = kernel.conditional_mean(x.max(y)).max(f64::MIN_POSITIVE);
    let outer_opts = QuadOptions {
        abs_tol: PAIR_SPLIT_REL_TOL * scale,
        rel_tol: 0.0,
        max_intervals: 400,
    };
    let inner_opts = QuadOptions {
        abs_tol: 1e-2 * PAIR_SPLIT_REL_TOL * scale,
        rel_tol: 0.0,
        max_intervals: 400,
    };
    match lx {
        ConditionalLaw::PointMass(v) => Ok(upper_partial_mean(&ly, v, inner_opts)?),
        ConditionalLaw::Scaled { .. } => {
            let Some(mut pts) = breakpoints(&lx, f64::NEG_INFINITY) else {
                return Ok(PairSplit {
                    value: 0.0,
                    abs_err: 0.0,
                });
            };
            let ly_lo = ly.lower();
            if ly_lo > pts[0] && ly_lo < pts[pts.len() - 1] {
                pts.push(ly_lo);
                pts.sort_by(f64::total_cmp);
            }
            let mut failure = None;
            let mut inner_err = 0.0f64;
            let r = integrate_with_breaks(
                |xp| {
                    let p = lx.pdf(xp);
                    if p == 0.0 {
                        return 0.0;
                    }
                    match upper_partial_mean(&ly, xp, inner_opts) {
                        Ok(v) => {
                            inner_err = inner_err.max(v.abs_err);
                            p * v.value
                        }
                        Err(e) => {
                            failure.get_or_insert(e);
                            f64::NAN
                        }
                    }
                },
                &pts,
                outer_opts,
            );
            if let Some(e) = failure {
                return Err(e.into());
            }
            let r = r?;
            Ok(PairSplit {
                value: r.value,
                abs_err: r.abs_err + inner_err,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalRow {
    pub x: f64,
    pub f_xx: f64,
    pub abs_err: f64,
    /// `F(x, x) - Gamma (alpha x + beta) / 2`.
    pub slack_mean: f64,
    /// `F(x, x) - Gamma x / 2`.
    pub slack_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalReport {
    pub gamma: f64,
    pub tolerance: f64,
    pub rows: Vec<DiagonalRow>,
}

impl DiagonalReport {
    pub fn satisfied(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.slack_mean >= -self.tolerance && r.slack_x >= -self.tolerance)
    }
}

/// Quadrature tolerance of the diagonal check.
pub const DIAGONAL_TOLERANCE: f64 = 1e-6;

/// `F(x, x)` against `Gamma (alpha x + beta) / 2` and `Gamma x / 2`.
pub fn diagonal_bound_check(
    kernel: &KernelSpec,
    x_grid: &[f64],
    gamma: f64,
) -> Result<DiagonalReport, AppendixError> {
    let rows = x_grid
        .par_iter()
        .map(|&x| {
            let f = pair_split_integral(kernel, x, x)?;
            Ok(DiagonalRow {
                x,
                f_xx: f.value,
                abs_err: f.abs_err,
                slack_mean: f.value - 0.5 * gamma * kernel.conditional_mean(x),
                slack_x: f.value - 0.5 * gamma * x,
            })
        })
        .collect::<Result<Vec<_>, AppendixError>>()?;
    Ok(DiagonalReport {
        gamma,
        tolerance: DIAGONAL_TOLERANCE,
        rows,
    })
}

/// The stripe `{|x - y| < delta x} ∩ (kappa mu, inf)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripeRegion {
    pub kappa: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripeMoments {
    /// Ensemble probability of the stripe, `P((x, y) in R)`.
    pub probability: f64,
    /// `P(z > kappa mu)^2`, the mass of the enclosing quadrant.
    pub quadrant: f64,
    /// `E[x; (x, y) in R] / P(z > kappa mu)^2`: the stripe moment of the
    /// rescaled density, to be compared with `2 delta kappa mu`.
    pub rescaled_moment: f64,
    pub target: f64,
}

impl StripeRegion {
    pub fn contains(&self, x: f64, y: f64, mu: f64) -> bool {
        let t = self.kappa * mu;
        x > t && y > t && (x - y).abs() < self.delta * x
    }

    /// Exact stripe moments of an ascending ensemble, in `O(N log N)`.
    pub fn moments(&self, sorted: &[f64]) -> StripeMoments {
        let n = sorted.len() as f64;
        let mu = metrics::mean(sorted);
        let t = self.kappa * mu;
        let start = sorted.partition_point(|&v| v <= t);
        let tail = &sorted[start..];
        let (mut count, mut moment) = (0.0, 0.0);
        for &x in tail {
            // y in (x (1 - delta), x (1 + delta)) and y > t.
            let lo = tail.partition_point(|&v| v <= x * (1.0 - self.delta));
            let hi = tail.partition_point(|&v| v < x * (1.0 + self.delta));
            let c = hi.saturating_sub(lo) as f64;
            count += c;
            moment += c * x;
        }
        let p = tail.len() as f64 / n;
        let quadrant = p * p;
        StripeMoments {
            probability: count / (n * n),
            quadrant,
            rescaled_moment: if quadrant > 0.0 {
                moment / (n * n) / quadrant
            } else {
                0.0
            },
            target: 2.0 * self.delta * self.kappa * mu,
        }
    }
}

/// A probability density on `(a, upper)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityOnRay {
    /// `h(y) = a / y^2` on `(a, inf)`.
    Extremal { a: f64 },
    /// Continuous piecewise power law: `p(y) ∝ y^{slopes[k]}` on
    /// `[knots[k], knots[k+1])`, the last piece running to `upper`.
    PiecewisePower {
        knots: Vec<f64>,
        slopes: Vec<f64>,
        upper: f64,
        /// Density value at each knot, already normalized.
        values: Vec<f64>,
    },
    /// Linear interpolation between `(point, density)` pairs, zero outside.
    Grid { points: Vec<f64>, values: Vec<f64> },
}

/// Integral of `y^s` between `lo` and `hi`, scaled so that the integrand is
/// `v (y / lo)^s` (value `v` at `lo`).
fn power_piece_mass(lo: f64, hi: f64, v: f64, s: f64) -> f64 {
    if hi == f64::INFINITY {
        debug_assert!(s < -1.0);
        return -v * lo / (s + 1.0);
    }
    let r = hi / lo;
    if (s + 1.0).abs() < 1e-12 {
        v * lo * r.ln()
    } else {
        v * lo * (r.powf(s + 1.0) - 1.0) / (s + 1.0)
    }
}

impl DensityOnRay {
    pub fn extremal(a: f64) -> Result<Self, AppendixError> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(AppendixError::InvalidInput(format!(
                "a must be > 0 (got {a})"
            )));
        }
        Ok(DensityOnRay::Extremal { a })
    }

    /// `c a^c y^{-1-c}` restricted to `(a, upper)` and renormalized.
    pub fn truncated_pareto(a: f64, c: f64, upper: f64) -> Result<Self, AppendixError> {
        Self::piecewise_power(vec![a], vec![-1.0 - c], upper)
    }

    /// Normalized piecewise power law with the given knots (the first is the
    /// lower endpoint) and log-log slopes.
    pub fn piecewise_power(
        knots: Vec<f64>,
        slopes: Vec<f64>,
        upper: f64,
    ) -> Result<Self, AppendixError> {
        let bad = |m: String| Err(AppendixError::InvalidInput(m));
        if knots.is_empty() || knots.len() != slopes.len() {
            return bad("need one slope per knot".into());
        }
        if !(knots[0] > 0.0)
            || knots.windows(2).any(|w| !(w[1] > w[0]))
            || !(upper > knots[knots.len() - 1])
        {
            return bad("knots must be positive, increasing and below the upper end".into());
        }
        if upper == f64::INFINITY && !(slopes[slopes.len() - 1] < -1.0) {
            return bad("an unbounded last piece needs slope < -1".into());
        }
        let mut values = vec![1.0];
        let mut total = 0.0;
        for k in 0..knots.len() {
            let hi = knots.get(k + 1).copied().unwrap_or(upper);
            total += power_piece_mass(knots[k], hi, values[k], slopes[k]);
            if k + 1 < knots.len() {
                values.push(values[k] * (hi / knots[k]).powf(slopes[k]));
            }
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(DensityOnRay::PiecewisePower {
            knots,
            slopes,
            upper,
            values,
        })
    }

    /// Density from samples on a grid; normalized by the trapezoid rule.
    pub fn grid(points: Vec<f64>, values: Vec<f64>) -> Result<Self, AppendixError> {
        if points.len() < 2 || points.len() != values.len() {
            return Err(AppendixError::InvalidInput(
                "grid needs >= 2 matching points and values".into(),
            ));
        }
        if !(points[0] > 0.0)
            || points.windows(2).any(|w| !(w[1] > w[0]))
            || values.iter().any(|v| !(*v >= 0.0))
        {
            return Err(AppendixError::InvalidInput(
                "grid points must be positive and increasing with nonnegative values".into(),
            ));
        }
        Ok(DensityOnRay::Grid { points, values })
    }

    pub fn lower(&self) -> f64 {
        match self {
            DensityOnRay::Extremal { a } => *a,
            DensityOnRay::PiecewisePower { knots, .. } => knots[0],
            DensityOnRay::Grid { points, .. } => points[0],
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            DensityOnRay::Extremal { .. } => f64::INFINITY,
            DensityOnRay::PiecewisePower { upper, .. } => *upper,
            DensityOnRay::Grid { points, .. } => points[points.len() - 1],
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        if !(y > self.lower() && y < self.upper()) {
            return 0.0;
        }
        match self {
            DensityOnRay::Extremal { a } => a / (y * y),
            DensityOnRay::PiecewisePower {
                knots,
                slopes,
                values,
                ..
            } => {
                let k = knots.partition_point(|&v| v <= y) - 1;
                values[k] * (y / knots[k]).powf(slopes[k])
            }
            DensityOnRay::Grid { points, values } => {
                let k = points.partition_point(|&v| v <= y) - 1;
                let w = (y - points[k]) / (points[k + 1] - points[k]);
                values[k] + w * (values[k + 1] - values[k])
            }
        }
    }

    /// `P(Y > y)`. For the extremal density the closed form `a / y` is used
    /// for every `y > 0`, i.e. the lower cutoff is not applied.
    fn survival_extended(&self, y: f64) -> f64 {
        match self {
            DensityOnRay::Extremal { a } => {
                if y <= 0.0 {
                    1.0
                } else {
                    a / y
                }
            }
            _ => self.survival(y),
        }
    }

    pub fn survival(&self, y: f64) -> f64 {
        let lo = self.lower();
        if y <= lo {
            return self.mass_above(lo);
        }
        if y >= self.upper() {
            return 0.0;
        }
        self.mass_above(y)
    }

    fn mass_above(&self, y: f64) -> f64 {
        match self {
            DensityOnRay::Extremal { a } => a / y,
            DensityOnRay::PiecewisePower {
                knots,
                slopes,
                upper,
                values,
            } => {
                let k0 = knots.partition_point(|&v| v <= y).max(1) - 1;
                let mut m = 0.0;
                for k in k0..knots.len() {
                    let lo = knots[k].max(y);
                    let hi = knots.get(k + 1).copied().unwrap_or(*upper);
                    let v = values[k] * (lo / knots[k]).powf(slopes[k]);
                    m += power_piece_mass(lo, hi, v, slopes[k]);
                }
                m
            }
            DensityOnRay::Grid { points, values } => {
                let mut m = 0.0;
                for k in 0..points.len() - 1 {
                    let (a, b) = (points[k], points[k + 1]);
                    if b <= y {
                        continue;
                    }
                    let lo = a.max(y);
                    m += 0.5 * (b - lo) * (self.pdf_closed(lo, k) + values[k + 1]);
                }
                m
            }
        }
    }

    fn pdf_closed(&self, y: f64, k: usize) -> f64 {
        let DensityOnRay::Grid { points, values } = self else {
            unreachable!()
        };
        let w = (y - points[k]) / (points[k + 1] - points[k]);
        values[k] + w * (values[k + 1] - values[k])
    }

    /// Total mass; 1 within `1e-6` for a valid density.
    pub fn total_mass(&self) -> f64 {
        self.mass_above(self.lower())
    }

    pub fn check_normalized(&self) -> Result<(), AppendixError> {
        let m = self.total_mass();
        if (m - 1.0).abs() > 1e-6 {
            return Err(AppendixError::NotNormalized(m));
        }
        Ok(())
    }

    /// Largest `|d log p / d log y|` on the support.
    pub fn max_log_derivative(&self) -> f64 {
        match self {
            DensityOnRay::Extremal { .. } => 2.0,
            DensityOnRay::PiecewisePower { slopes, .. } => {
                slopes.iter().fold(0.0, |m, s| m.max(s.abs()))
            }
            DensityOnRay::Grid { points, values } => points
                .windows(2)
                .zip(values.windows(2))
                .filter(|(_, v)| v[0] > 0.0 && v[1] > 0.0)
                .map(|(p, v)| ((v[1] / v[0]).ln() / (p[1] / p[0]).ln()).abs())
                .fold(0.0, f64::max),
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            DensityOnRay::Extremal { .. } => vec![],
            DensityOnRay::PiecewisePower { knots, .. } => knots[1..].to_vec(),
            DensityOnRay::Grid { points, .. } => points[1..points.len() - 1].to_vec(),
        }
    }
}

/// Whether the inner window of the functional is clipped at the lower end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    Respect,
    /// Integrate the closed-form extension below `a` (only differs for the
    /// extremal density).
    Ignore,
}

/// `Y_a[p] = int_a^inf x p(x) int_{x e^-d}^{x e^d} p(y) dy dx`.
///
/// The inner integral is an exact difference of survival functions; the
/// outer one is adaptive quadrature, on `u = a/x` when the support is
/// unbounded.
pub fn y_functional(p: &DensityOnRay, delta: f64, cutoff: Cutoff) -> Result<f64, AppendixError> {
    if !(delta >= 0.0 && delta < 0.2) {
        return Err(AppendixError::InvalidInput(format!(
            "delta must lie in [0, 0.2) (got {delta})"
        )));
    }
    p.check_normalized()?;
    if delta == 0.0 {
        return Ok(0.0);
    }
    let (ed, emd) = (delta.exp(), (-delta).exp());
    let window = |x: f64| match cutoff {
        Cutoff::Ignore => p.survival_extended(x * emd) - p.survival_extended(x * ed),
        Cutoff::Respect => p.survival(x * emd) - p.survival(x * ed),
    };
    let a = p.lower();
    let upper = p.upper();
    let mut breaks: Vec<f64> = Vec::new();
    for k in p.kinks().into_iter().chain([a, upper]) {
        breaks.extend([k, k * ed, k * emd]);
    }
    let opts = QuadOptions {
        abs_tol: 1e-14 * a,
        rel_tol: 1e-12,
        max_intervals: 4000,
    };
    let value = if upper.is_finite() {
        let mut pts: Vec<f64> = breaks.into_iter().filter(|&b| b > a && b < upper).collect();
        pts.extend([a, upper]);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        integrate_with_breaks(|x| x * p.pdf(x) * window(x), &pts, opts)?.value
    } else {
        let mut pts: Vec<f64> = breaks
            .into_iter()
            .filter(|&b| b > a && b.is_finite())
            .map(|b| a / b)
            .collect();
        pts.extend([0.0, 1.0]);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        integrate_with_breaks(
            |u| {
                if u == 0.0 {
                    return 0.0;
                }
                let x = a / u;
                x * p.pdf(x) * window(x) * a / (u * u)
            },
            &pts,
            opts,
        )?
        .value
    };
    Ok(value)
}

/// Closed form of the functional on the extremal density without cutoff.
pub fn extremal_closed_form(a: f64, delta: f64) -> f64 {
    2.0 * a * delta.sinh()
}

/// Bounds on `int_{x e^-d}^{x e^d} p(y) dy / (x p(x))` implied by
/// `|d log p / d log y| <= d_max` on the window.
pub fn window_ratio_bounds(delta: f64, d_max: f64) -> (f64, f64) {
    // int_{e^-d}^{1} s^{+-D} ds + int_{1}^{e^d} s^{-+D} ds
    let pow_int = |lo: f64, hi: f64, e: f64| {
        if (e + 1.0).abs() < 1e-12 {
            (hi / lo).ln()
        } else {
            (hi.powf(e + 1.0) - lo.powf(e + 1.0)) / (e + 1.0)
        }
    };
    let (lo, hi) = ((-delta).exp(), delta.exp());
    let lower = pow_int(lo, 1.0, d_max) + pow_int(1.0, hi, -d_max);
    let upper = pow_int(lo, 1.0, -d_max) + pow_int(1.0, hi, d_max);
    (lower, upper)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub label: String,
    pub max_log_derivative: f64,
    pub y_value: f64,
    /// `Y[p] / Y[h]`.
    pub ratio: f64,
    pub minimal_ok: bool,
    /// Points checked against the window identity, and failures.
    pub window_points: usize,
    pub window_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub a: f64,
    pub delta: f64,
    pub constant: f64,
    /// `a (e^d - e^-d)`.
    pub extremal_closed: f64,
    /// The extremal density with the lower cutoff applied.
    pub extremal_respected: f64,
    /// Log-derivative ceiling for trial densities.
    pub derivative_ceiling: f64,
    pub trials: Vec<TrialOutcome>,
    /// Random trials rejected because they broke the derivative ceiling.
    pub excluded: usize,
}

impl MinimalityReport {
    pub fn satisfied(&self) -> bool {
        self.trials
            .iter()
            .all(|t| t.minimal_ok && t.window_failures == 0)
    }
}

/// A random continuous piecewise power law on `(a, inf)` with interior
/// slopes in `[-6, 6]` and a tail slope in `[-3.5, -2]`.
pub fn random_trial_density<R: Rng + ?Sized>(a: f64, rng: &mut R) -> DensityOnRay {
    let pieces = rng.random_range(1..=5);
    let mut knots = vec![a];
    let mut slopes = Vec::new();
    for _ in 1..pieces {
        let width: f64 = rng.random_range(0.05..1.5);
        knots.push(knots[knots.len() - 1] * width.exp());
        slopes.push(rng.random_range(-6.0..6.0));
    }
    slopes.push(rng.random_range(-3.5..-2.0));
    DensityOnRay::piecewise_power(knots, slopes, f64::INFINITY).expect("valid by construction")
}

fn evaluate_trial(
    label: String,
    p: &DensityOnRay,
    delta: f64,
    reference: f64,
) -> Result<TrialOutcome, AppendixError> {
    let y = y_functional(p, delta, Cutoff::Respect)?;
    let d = p.max_log_derivative();
    let (lo, hi) = window_ratio_bounds(delta, d);
    let a = p.lower();
    let top = if p.upper().is_finite() {
        p.upper()
    } else {
        a * 1e3
    };
    let (from, to) = (a * delta.exp(), top * (-delta).exp());
    let mut points = 0;
    let mut failures = 0;
    if to > from {
        for i in 0..16 {
            let x = from * (to / from).powf((i as f64 + 0.5) / 16.0);
            let w = p.survival(x * (-delta).exp()) - p.survival(x * delta.exp());
            let r = w / (x * p.pdf(x));
            points += 1;
            if !(r >= lo * (1.0 - 1e-9) && r <= hi * (1.0 + 1e-9)) {
                failures += 1;
            }
        }
    }
    Ok(TrialOutcome {
        label,
        max_log_derivative: d,
        y_value: y,
        ratio: y / reference,
        minimal_ok: y >= reference * (1.0 - MINIMALITY_CONSTANT * delta),
        window_points: points,
        window_failures: failures,
    })
}

/// Evaluate the functional on the extremal density, on truncated Pareto
/// laws with `c` in `{0.5, 1, 2}` and upper end `1000 a`, and on `n_trials`
/// random densities whose log-derivative stays below `1 / (4 delta)`.
pub fn extremal_minimality_check(
    a: f64,
    delta: f64,
    n_trials: usize,
    seed: u64,
) -> Result<MinimalityReport, AppendixError> {
    if !(delta > 0.0 && delta <= 0.05) {
        return Err(AppendixError::InvalidInput(format!(
            "delta must lie in (0, 0.05] (got {delta})"
        )));
    }
    let h = DensityOnRay::extremal(a)?;
    let reference = extremal_closed_form(a, delta);
    let ceiling = 0.25 / delta;
    let mut trials = Vec::new();
    let mut excluded = 0;
    if n_trials > 0 {
        trials.push(evaluate_trial("extremal".into(), &h, delta, reference)?);
        for c in [0.5, 1.0, 2.0] {
            let p = DensityOnRay::truncated_pareto(a, c, 1000.0 * a)?;
            trials.push(evaluate_trial(
                format!("pareto_c{c}"),
                &p,
                delta,
                reference,
            )?);
        }
        let random: Vec<Option<Result<TrialOutcome, AppendixError>>> = (0..n_trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = Stream::new(seed, Domain::TrialDensity, i as u32, 0);
                let p = random_trial_density(a, &mut rng);
                if p.max_log_derivative() > ceiling {
                    return None;
                }
                Some(evaluate_trial(format!("random_{i}"), &p, delta, reference))
            })
            .collect();
        for r in random {
            match r {
                None => excluded += 1,
                Some(t) => trials.push(t?),
            }
        }
    }
    Ok(MinimalityReport {
        a,
        delta,
        constant: MINIMALITY_CONSTANT,
        extremal_closed: reference,
        extremal_respected: y_functional(&h, delta, Cutoff::Respect)?,
        derivative_ceiling: ceiling,
        trials,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MainInequalityReport {
    pub mu: f64,
    pub tail_prob: f64,
    pub pairs: usize,
    /// Pairs whose quadrature failed; excluded from the mean.
    pub excluded: usize,
    pub mean_f: f64,
    pub std_err: f64,
    /// `delta kappa mu Gamma (1 - eps) P^2`.
    pub rhs: f64,
    pub stripe: StripeMoments,
}

impl MainInequalityReport {
    pub fn margin(&self) -> f64 {
        self.mean_f - self.rhs
    }

    /// Margin in Monte Carlo standard errors.
    pub fn margin_in_std_errs(&self) -> f64 {
        self.margin() / self.std_err
    }

    pub fn satisfied(&self) -> bool {
        self.margin() > 0.0
    }
}

/// Estimate `E[F(x, y)]` over `pairs` ensemble pairs drawn with replacement
/// and compare with `delta kappa mu Gamma (1 - eps) P^2`.
pub fn main_inequality_check(
    pop: &PopulationState,
    kernel: &KernelSpec,
    params: &BoundParams,
    pairs: usize,
    seed: u64,
) -> Result<MainInequalityReport, AppendixError> {
    if !kernel.has_density() {
        return Err(AppendixError::NoDensity);
    }
    if pairs < 2 {
        return Err(AppendixError::InvalidInput(format!(
            "need at least 2 pairs (got {pairs})"
        )));
    }
    let w = pop.wealth();
    let mu = pop.mean();
    let tail_prob = metrics::tail_probability(w, params.kappa)?;
    let n = w.len();
    let values: Vec<Option<f64>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::new(seed, Domain::PairSampling, 0, i as u32);
            let x = w[rng.random_range(0..n)];
            let y = w[rng.random_range(0..n)];
            pair_split_integral(kernel, x, y).ok().map(|f| f.value)
        })
        .collect();
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let m = ok.len() as f64;
    let mean_f = ok.iter().sum::<f64>() / m;
    let var = ok.iter().map(|v| (v - mean_f).powi(2)).sum::<f64>() / (m - 1.0);
    let mut sorted = w.to_vec();
    metrics::sort_ascending(&mut sorted);
    let stripe = StripeRegion {
        kappa: params.kappa,
        delta: params.delta_stripe,
    }
    .moments(&sorted);
    Ok(MainInequalityReport {
        mu,
        tail_prob,
        pairs,
        excluded: pairs - ok.len(),
        mean_f,
        std_err: (var / m).sqrt(),
        rhs: params.delta_stripe
            * params.kappa
            * mu
            * params.gamma_logderiv
            * (1.0 - params.epsilon)
            * tail_prob
            * tail_prob,
        stripe,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPoint {
    pub x: f64,
    pub density: f64,
    /// `d log p / d log x`.
    pub log_derivative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationReport {
    pub bound: f64,
    pub points: Vec<PropagationPoint>,
    /// Share of the grid's density mass where the bound holds.
    pub mass_within: f64,
    /// Same share on the grid refined to half spacing.
    pub refined_mass_within: f64,
    /// Density mass captured by the grid range.
    pub grid_mass: f64,
    pub required_mass: f64,
}

impl PropagationReport {
    pub fn satisfied(&self) -> bool {
        self.mass_within >= self.required_mass
    }
}

/// Relative slack on the bound to absorb finite-difference error.
const PROPAGATION_SLACK: f64 = 1e-3;

fn mixture_density(kernel: &KernelSpec, agents: &[f64], x: f64) -> Result<f64, AppendixError> {
    let mut s = 0.0;
    for &xi in agents {
        s += match kernel.conditional_law(xi)? {
            ConditionalLaw::PointMass(_) => 0.0,
            law => law.pdf(x),
        };
    }
    Ok(s / agents.len() as f64)
}

fn propagation_pass(
    kernel: &KernelSpec,
    agents: &[f64],
    grid: &[f64],
    bound: f64,
) -> Result<(Vec<PropagationPoint>, f64, f64), AppendixError> {
    let h = LOG_PROBE_STEP;
    let points = grid
        .par_iter()
        .map(|&x| {
            let p = mixture_density(kernel, agents, x)?;
            let up = mixture_density(kernel, agents, x * h.exp())?;
            let down = mixture_density(kernel, agents, x * (-h).exp())?;
            let d = if up > 0.0 && down > 0.0 {
                (up.ln() - down.ln()) / (2.0 * h)
            } else {
                f64::INFINITY
            };
            Ok(PropagationPoint {
                x,
                density: p,
                log_derivative: d,
            })
        })
        .collect::<Result<Vec<_>, AppendixError>>()?;
    let (mut total, mut within) = (0.0, 0.0);
    for w in points.windows(2) {
        let dx = w[1].x - w[0].x;
        for q in w {
            let m = 0.5 * dx * q.density;
            total += m;
            if q.log_derivative.abs() <= bound * (1.0 + PROPAGATION_SLACK) {
                within += m;
            }
        }
    }
    Ok((points, within / total, total))
}

/// Push the previous ensemble through the kernel onto `x_grid` and check
/// `|d log p / d log x| <= 1 / gamma_claimed` on at least 99% of the
/// density mass. Agents at zero wealth contribute a point mass that has no
/// density and are skipped.
pub fn density_log_derivative_propagation(
    pop_prev: &PopulationState,
    kernel: &KernelSpec,
    x_grid: &[f64],
    gamma_claimed: f64,
) -> Result<PropagationReport, AppendixError> {
    if !kernel.has_density() {
        return Err(AppendixError::NoDensity);
    }
    if x_grid.len() < 3 || x_grid.windows(2).any(|w| !(w[1] > w[0])) || !(x_grid[0] > 0.0) {
        return Err(AppendixError::InvalidInput(
            "x grid needs >= 3 positive increasing points".into(),
        ));
    }
    if !(gamma_claimed > 0.0) {
        return Err(AppendixError::InvalidInput(format!(
            "gamma must be > 0 (got {gamma_claimed})"
        )));
    }
    let bound = 1.0 / gamma_claimed;
    let agents: Vec<f64> = pop_prev
        .wealth()
        .iter()
        .copied()
        .filter(|&x| x > 0.0)
        .collect();
    if agents.is_empty() {
        return Err(AppendixError::InvalidInput(
            "no agent with positive wealth".into(),
        ));
    }
    let (points, mass_within, grid_mass) = propagation_pass(kernel, &agents, x_grid, bound)?;
    let mut refined = Vec::with_capacity(2 * x_grid.len());
    for w in x_grid.windows(2) {
        refined.extend([w[0], 0.5 * (w[0] + w[1])]);
    }
    refined.push(x_grid[x_grid.len() - 1]);
    let (_, refined_mass_within, refined_mass) =
        propagation_pass(kernel, &agents, &refined, bound)?;
    let suggested_points = 4 * x_grid.len();
    if (refined_mass_within - mass_within).abs() > 5e-3 || (refined_mass - grid_mass).abs() > 1e-2 {
        return Err(AppendixError::GridTooCoarse {
            detail: format!(
                "mass within bound moved from {mass_within:.6} to {refined_mass_within:.6} on refinement"
            ),
            suggested_points,
        });
    }
    if grid_mass < 0.99 {
        return Err(AppendixError::GridTooCoarse {
            detail: format!("grid range captures only {grid_mass:.6} of the density mass"),
            suggested_points,
        });
    }
    Ok(PropagationReport {
        bound,
        points,
        mass_within,
        refined_mass_within,
        grid_mass,
        required_mass: 0.99,
    })
}

/// Geometric grid of `n` points between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}
