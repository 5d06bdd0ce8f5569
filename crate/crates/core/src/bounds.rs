//! Closed-form concentration inequalities and their per-step evaluation.
//!
//! Every inequality is reported as an [`InequalityRecord`] with the sign
//! convention that positive slack means "satisfied". Records are either
//! checks (inequalities the dynamics must obey, up to a declared tolerance)
//! or diagnostics (conditions whose truth value is informative, such as
//! whether a salary is large enough to halt concentration growth).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("invalid bound parameter: {0}")]
    InvalidParameter(String),
}

/// Free parameters of the tail-mass bounds.
///
/// `gamma_logderiv` is the inverse of the larger log-derivative bound
/// `max(Delta, Delta')`; `epsilon = delta_stripe * max(Delta, Delta')` is
/// derived from it and must stay below one for the bound to be informative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub kappa: f64,
    pub delta_stripe: f64,
    pub epsilon: f64,
    pub gamma_logderiv: f64,
}

impl BoundParams {
    pub fn new(kappa: f64, delta_stripe: f64, gamma_logderiv: f64) -> Result<Self, BoundsError> {
        let bad = |m: String| Err(BoundsError::InvalidParameter(m));
        if !(kappa > 0.0 && kappa < 0.5) {
            return bad(format!("kappa must lie in (0, 1/2) (got {kappa})"));
        }
        if !(delta_stripe > 0.0 && delta_stripe < 1.0) {
            return bad(format!("delta must lie in (0, 1) (got {delta_stripe})"));
        }
        if !(gamma_logderiv >= 0.0 && gamma_logderiv.is_finite()) {
            return bad(format!(
                "the log-derivative constant must be >= 0 (got {gamma_logderiv})"
            ));
        }
        // A zero constant makes every tail term vanish, so epsilon is moot.
        let epsilon = if gamma_logderiv == 0.0 {
            0.0
        } else {
            delta_stripe / gamma_logderiv
        };
        if epsilon >= 1.0 {
            return bad(format!(
                "epsilon = delta * max(Delta, Delta') = {delta_stripe} / {gamma_logderiv} = {epsilon} must be < 1; \
                 lower delta"
            ));
        }
        Ok(Self {
            kappa,
            delta_stripe,
            epsilon,
            gamma_logderiv,
        })
    }

    /// Parameters from the larger log-derivative bound `max(Delta, Delta')`.
    pub fn from_log_derivative_bound(
        kappa: f64,
        delta_stripe: f64,
        max_bound: f64,
    ) -> Result<Self, BoundsError> {
        Self::new(kappa, delta_stripe, 1.0 / max_bound)
    }

    /// `delta * kappa * gamma`: the tail-mass coefficient shared by the
    /// Gini bounds.
    pub fn tail_coefficient(&self) -> f64 {
        self.delta_stripe * self.kappa * self.gamma_logderiv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Check,
    Diagnostic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityRecord {
    pub name: String,
    pub kind: RecordKind,
    pub lhs: f64,
    pub rhs: f64,
    /// Positive means satisfied.
    pub slack: f64,
    /// Allowed negative slack for checks; zero for exact inequalities and
    /// NaN when it was not needed and therefore not computed.
    pub tolerance: f64,
}

impl InequalityRecord {
    /// Record for `lhs >= rhs`.
    pub fn at_least(name: impl Into<String>, kind: RecordKind, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            kind,
            lhs,
            rhs,
            slack: lhs - rhs,
            tolerance: 0.0,
        }
    }

    /// Record for `lhs <= rhs`.
    pub fn at_most(name: impl Into<String>, kind: RecordKind, lhs: f64, rhs: f64) -> Self {
        Self {
            slack: rhs - lhs,
            ..Self::at_least(name, kind, lhs, rhs)
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn satisfied(&self) -> bool {
        self.slack >= 0.0
    }

    pub fn within_tolerance(&self) -> bool {
        self.satisfied() || self.slack >= -self.tolerance
    }
}

/// All inequality records attached to one snapshot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundReport {
    pub t: u64,
    pub records: Vec<InequalityRecord>,
}

impl BoundReport {
    pub fn get(&self, name: &str) -> Option<&InequalityRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Checks that fail even after their tolerance.
    pub fn failures(&self) -> impl Iterator<Item = &InequalityRecord> {
        self.records
            .iter()
            .filter(|r| r.kind == RecordKind::Check && !r.within_tolerance())
    }
}

/// Outcome of a halting condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub slack: f64,
}

/// Lower bound on next-step `CV^2` under linear growth:
/// `[(1 + G^2/a^2) CV^2 + G^2/a^2] / (1 + b/(a mu))^2`.
pub fn cv_growth_lower_bound(cv: f64, alpha: f64, beta: f64, mu: f64, gamma_disp: f64) -> f64 {
    let g2 = (gamma_disp / alpha).powi(2);
    ((1.0 + g2) * cv * cv + g2) / (1.0 + beta / (alpha * mu)).powi(2)
}

/// Whether salary is large enough that CV growth is no longer forced:
/// `b^2/(a^2 mu^2) + 2 b/(a mu) >= (G^2/a^2)(1 + 1/CV^2)`.
///
/// At `CV = 0` the right side is infinite whenever `G > 0`, so the condition
/// is unsatisfiable.
pub fn cv_halting_condition(cv: f64, alpha: f64, beta: f64, mu: f64, gamma_disp: f64) -> Condition {
    let r = beta / (alpha * mu);
    let lhs = r * r + 2.0 * r;
    let g2 = (gamma_disp / alpha).powi(2);
    let rhs = if g2 == 0.0 {
        0.0
    } else if cv == 0.0 {
        f64::INFINITY
    } else {
        g2 * (1.0 + 1.0 / (cv * cv))
    };
    let slack = lhs - rhs;
    Condition {
        lhs,
        rhs,
        satisfied: slack >= 0.0,
        slack,
    }
}

/// Smallest salary solving the halting condition exactly (the positive root
/// of `r^2 + 2r = rhs` scaled back by `alpha * mu`).
pub fn min_salary_exact(cv: f64, alpha: f64, mu: f64, gamma_disp: f64) -> f64 {
    let rhs = cv_halting_condition(cv, alpha, 0.0, mu, gamma_disp).rhs;
    ((1.0 + rhs).sqrt() - 1.0) * alpha * mu
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SalaryThreshold {
    pub value: f64,
    /// The small-dispersion reduction assumes `CV >= 1`.
    pub outside_regime: bool,
}

/// Small-dispersion threshold `G^2 mu / (2a) * (1 + 1/CV^2)`.
pub fn min_salary_small_gamma(cv: f64, alpha: f64, mu: f64, gamma_disp: f64) -> SalaryThreshold {
    let value = if gamma_disp == 0.0 {
        0.0
    } else {
        gamma_disp * gamma_disp * mu / (2.0 * alpha) * (1.0 + 1.0 / (cv * cv))
    };
    SalaryThreshold {
        value,
        outside_regime: cv < 1.0,
    }
}

/// The same threshold as a fraction of mean wealth.
pub fn min_salary_fraction(cv: f64, alpha: f64, gamma_disp: f64) -> f64 {
    min_salary_small_gamma(cv, alpha, 1.0, gamma_disp).value
}

/// Lower bound on the realized one-step Gini change:
/// `(-b G + delta kappa mu Gamma P^2) / mu_next`.
pub fn gini_growth_lower_bound(
    gini: f64,
    beta: f64,
    mu: f64,
    mu_next: f64,
    params: &BoundParams,
    tail_prob: f64,
) -> f64 {
    (-beta * gini + params.tail_coefficient() * mu * tail_prob * tail_prob) / mu_next
}

/// Largest tail mass `P(z/mu > kappa)` compatible with a non-growing Gini:
/// `sqrt(G b / (delta kappa Gamma mu))`, clamped to `[0, 1]`.
pub fn gini_halting_tail_bound(gini: f64, beta: f64, mu: f64, params: &BoundParams) -> f64 {
    if params.tail_coefficient() == 0.0 {
        return 1.0;
    }
    (gini * beta / (params.tail_coefficient() * mu))
        .max(0.0)
        .sqrt()
        .min(1.0)
}

/// `(1 - 2 kappa) * P(z/mu <= kappa)`: the floor the Gini cannot drop below.
pub fn saturation_lower_bound(tail_complement: f64, kappa: f64) -> f64 {
    (1.0 - 2.0 * kappa) * tail_complement
}

/// Redistribution moments implied by writing a salary `b` as growth
/// `gamma = a + b/mu` plus the zero-mean transfer `zeta(x) = b (1 - x/mu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adaptation {
    pub gamma: f64,
    pub var_zeta: f64,
    pub cov_x_zeta: f64,
}

pub fn adaptation_substitution(alpha: f64, beta: f64, mu: f64, cv: f64) -> Adaptation {
    Adaptation {
        gamma: alpha + beta / mu,
        var_zeta: beta * beta * cv * cv,
        cov_x_zeta: -beta * mu * cv * cv,
    }
}

/// General-growth halting condition
/// `G^2 mu^2 (CV^2 + 1) + Var[zeta] + 2 gamma Cov[x, zeta] <= 0`.
/// Only a negative covariance (a wealth tax) can satisfy it.
pub fn general_cv_condition(
    gamma_t: f64,
    mu: f64,
    cv: f64,
    var_zeta: f64,
    cov_x_zeta: f64,
    gamma_disp: f64,
) -> Condition {
    let lhs =
        gamma_disp * gamma_disp * mu * mu * (cv * cv + 1.0) + var_zeta + 2.0 * gamma_t * cov_x_zeta;
    Condition {
        lhs,
        rhs: 0.0,
        satisfied: lhs <= 0.0,
        slack: -lhs,
    }
}

/// `delta kappa mu Gamma P^2`: the minimum mean absolute difference the
/// redistribution term must reach to halt Gini growth.
pub fn zeta_variability_lower_bound(params: &BoundParams, mu: f64, tail_prob: f64) -> f64 {
    params.tail_coefficient() * mu * tail_prob * tail_prob
}

/// Both readings of the Gini-side redistribution condition. With pairs
/// restricted to `x > y` the mean absolute difference is halved, so the
/// two conventions differ by a factor of two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaVariability {
    /// `E|zeta(x) - zeta(y)|` over all ordered pairs.
    pub mean_abs_diff: f64,
    pub bound: f64,
    pub satisfied_all_pairs: bool,
    /// Same comparison with the half-weight ordered-pair convention.
    pub satisfied_ordered_pairs: bool,
}

pub fn zeta_variability_check(mean_abs_diff: f64, bound: f64) -> ZetaVariability {
    ZetaVariability {
        mean_abs_diff,
        bound,
        satisfied_all_pairs: mean_abs_diff >= bound,
        satisfied_ordered_pairs: 0.5 * mean_abs_diff >= bound,
    }
}
