//! Transition kernels `w(x -> x')` for one-step wealth updates.
//!
//! All noisy families share the same shape: the next wealth is
//! `x' = x * U + beta`, where `U` is a positive random growth factor with
//! mean `alpha` and standard deviation `gamma_disp`. That fixes the
//! conditional mean at `alpha * x + beta` and the conditional variance at
//! `gamma_disp^2 * x^2`, with support `x' >= beta`. An agent at zero wealth
//! moves to `beta` with certainty.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Gamma, LogNormal};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};
use thiserror::Error;

/// Relative step, in log coordinates, of the finite-difference probes.
pub const LOG_PROBE_STEP: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error("negative wealth {0} is not a valid state")]
    NegativeWealth(f64),
    #[error("no density: the deterministic kernel is a point mass")]
    NoDensity,
    #[error("degenerate at {0}: a zero-wealth agent moves to the salary with certainty")]
    DegenerateAt(f64),
    #[error("outside support: density vanishes near (x = {x}, x' = {xp})")]
    OutsideSupport { x: f64, xp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Deterministic,
    LognormalMultiplicative,
    GammaMultiplicative,
}

/// Which argument of `w(x -> x')` a log-derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeAxis {
    Input,
    Output,
}

/// Law of the multiplicative growth factor `U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLaw {
    Lognormal { log_mean: f64, log_sd: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl NoiseLaw {
    /// Moment-matched law with the given mean and standard deviation.
    pub fn matching(family: KernelFamily, mean: f64, sd: f64) -> Option<Self> {
        if !(mean > 0.0 && sd > 0.0) {
            return None;
        }
        match family {
            KernelFamily::Deterministic => None,
            KernelFamily::LognormalMultiplicative => {
                let s2 = (1.0 + (sd / mean).powi(2)).ln();
                Some(NoiseLaw::Lognormal {
                    log_mean: mean.ln() - 0.5 * s2,
                    log_sd: s2.sqrt(),
                })
            }
            KernelFamily::GammaMultiplicative => Some(NoiseLaw::Gamma {
                shape: (mean / sd).powi(2),
                scale: sd * sd / mean,
            }),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseLaw::Lognormal { log_mean, log_sd } => (log_mean + 0.5 * log_sd * log_sd).exp(),
            NoiseLaw::Gamma { shape, scale } => shape * scale,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseLaw::Lognormal { log_sd, .. } => (log_sd * log_sd).exp_m1() * self.mean().powi(2),
            NoiseLaw::Gamma { shape, scale } => shape * scale * scale,
        }
    }

    pub fn ln_pdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            NoiseLaw::Lognormal { log_mean, log_sd } => {
                let z = (u.ln() - log_mean) / log_sd;
                -0.5 * z * z - u.ln() - log_sd.ln() - 0.5 * (2.0 * PI).ln()
            }
            NoiseLaw::Gamma { shape, scale } => {
                (shape - 1.0) * u.ln() - u / scale - ln_gamma(shape) - shape * scale.ln()
            }
        }
    }

    pub fn pdf(&self, u: f64) -> f64 {
        self.ln_pdf(u).exp()
    }

    pub fn cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match *self {
            NoiseLaw::Lognormal { log_mean, log_sd } => {
                0.5 * erfc(-(u.ln() - log_mean) / (log_sd * SQRT_2))
            }
            NoiseLaw::Gamma { shape, scale } => gamma_lr(shape, u / scale),
        }
    }

    pub fn survival(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        match *self {
            NoiseLaw::Lognormal { log_mean, log_sd } => {
                0.5 * erfc((u.ln() - log_mean) / (log_sd * SQRT_2))
            }
            NoiseLaw::Gamma { shape, scale } => gamma_ur(shape, u / scale),
        }
    }

    /// The `u` with `P(U <= u) = p`.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            NoiseLaw::Lognormal { log_mean, log_sd } => {
                (log_mean - SQRT_2 * log_sd * erfc_inv(2.0 * p)).exp()
            }
            NoiseLaw::Gamma { .. } => self.solve(|u| self.cdf(u), p),
        }
    }

    /// The `u` with `P(U > u) = q`, accurate for tiny `q`.
    pub fn upper_quantile(&self, q: f64) -> f64 {
        match *self {
            NoiseLaw::Lognormal { log_mean, log_sd } => {
                (log_mean + SQRT_2 * log_sd * erfc_inv(2.0 * q)).exp()
            }
            NoiseLaw::Gamma { .. } => self.solve(|u| 1.0 - self.survival(u), 1.0 - q),
        }
    }

    // Bisection in log-space on a monotone increasing function of u.
    fn solve(&self, f: impl Fn(f64) -> f64, target: f64) -> f64 {
        let center = self.mean();
        let (mut lo, mut hi) = (center, center);
        while f(lo) > target && lo > 1e-300 {
            lo *= 0.5;
        }
        while f(hi) < target && hi < 1e300 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if f(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-15 {
                break;
            }
        }
        (lo * hi).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
enum Sampler {
    None,
    Lognormal(LogNormal<f64>),
    Gamma(Gamma<f64>),
}

impl Sampler {
    fn for_law(law: Option<NoiseLaw>) -> Self {
        match law {
            None => Sampler::None,
            Some(NoiseLaw::Lognormal { log_mean, log_sd }) => {
                Sampler::Lognormal(LogNormal::new(log_mean, log_sd).expect("validated lognormal"))
            }
            Some(NoiseLaw::Gamma { shape, scale }) => {
                Sampler::Gamma(Gamma::new(shape, scale).expect("validated gamma"))
            }
        }
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::None => 0.0,
            Sampler::Lognormal(d) => d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
        }
    }
}

/// Conditional law of `x'` given `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionalLaw {
    PointMass(f64),
    Scaled {
        scale: f64,
        shift: f64,
        noise: NoiseLaw,
    },
}

impl ConditionalLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            ConditionalLaw::PointMass(v) => v,
            ConditionalLaw::Scaled {
                scale,
                shift,
                noise,
            } => scale * noise.mean() + shift,
        }
    }

    /// Lower end of the support.
    pub fn lower(&self) -> f64 {
        match *self {
            ConditionalLaw::PointMass(v) => v,
            ConditionalLaw::Scaled { shift, .. } => shift,
        }
    }

    pub fn pdf(&self, xp: f64) -> f64 {
        match *self {
            ConditionalLaw::PointMass(_) => 0.0,
            ConditionalLaw::Scaled {
                scale,
                shift,
                noise,
            } => {
                if xp <= shift {
                    0.0
                } else {
                    noise.pdf((xp - shift) / scale) / scale
                }
            }
        }
    }

    pub fn cdf(&self, xp: f64) -> f64 {
        match *self {
            ConditionalLaw::PointMass(v) => {
                if xp >= v {
                    1.0
                } else {
                    0.0
                }
            }
            ConditionalLaw::Scaled {
                scale,
                shift,
                noise,
            } => noise.cdf((xp - shift) / scale),
        }
    }

    pub fn survival(&self, xp: f64) -> f64 {
        match *self {
            ConditionalLaw::PointMass(v) => {
                if xp >= v {
                    0.0
                } else {
                    1.0
                }
            }
            ConditionalLaw::Scaled {
                scale,
                shift,
                noise,
            } => noise.survival((xp - shift) / scale),
        }
    }

    /// Support truncated to the central `1 - 2 * tail` mass; the lower end is
    /// the true support boundary.
    pub fn truncated_support(&self, tail: f64) -> (f64, f64) {
        match *self {
            ConditionalLaw::PointMass(v) => (v, v),
            ConditionalLaw::Scaled {
                scale,
                shift,
                noise,
            } => (shift, shift + scale * noise.upper_quantile(tail)),
        }
    }

    /// Interior points worth seeding an adaptive quadrature with.
    pub fn landmarks(&self) -> Vec<f64> {
        match *self {
            ConditionalLaw::PointMass(v) => vec![v],
            ConditionalLaw::Scaled {
                scale,
                shift,
                noise,
            } => [1e-6, 1e-3, 0.1, 0.5, 0.9, 1.0 - 1e-3]
                .iter()
                .map(|&p| shift + scale * noise.quantile(p))
                .collect(),
        }
    }
}

/// A transition-kernel family together with its hypothesis constants.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: KernelFamily,
    alpha: f64,
    beta: f64,
    gamma_disp: f64,
    delta_logx: Option<f64>,
    delta_logxp: Option<f64>,
    noise: Option<NoiseLaw>,
    sampler: Sampler,
}

impl PartialEq for KernelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
            && self.alpha == other.alpha
            && self.beta == other.beta
            && self.gamma_disp == other.gamma_disp
            && self.delta_logx == other.delta_logx
            && self.delta_logxp == other.delta_logxp
    }
}

impl KernelSpec {
    pub fn new(
        family: KernelFamily,
        alpha: f64,
        beta: f64,
        gamma_disp: f64,
    ) -> Result<Self, KernelError> {
        let bad = |msg: String| Err(KernelError::InvalidParameter(msg));
        if !(alpha.is_finite() && alpha >= 1.0) {
            return bad(format!("alpha must be >= 1 (got {alpha})"));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return bad(format!("beta must be >= 0 (got {beta})"));
        }
        if !(gamma_disp.is_finite() && gamma_disp >= 0.0) {
            return bad(format!("gamma_disp must be >= 0 (got {gamma_disp})"));
        }
        match family {
            KernelFamily::Deterministic if gamma_disp > 0.0 => {
                return bad(format!(
                    "the deterministic family has no dispersion (gamma_disp = {gamma_disp})"
                ))
            }
            KernelFamily::LognormalMultiplicative | KernelFamily::GammaMultiplicative
                if gamma_disp == 0.0 =>
            {
                return bad("noisy families need gamma_disp > 0".into())
            }
            _ => {}
        }
        let noise = NoiseLaw::matching(family, alpha, gamma_disp);
        Ok(Self {
            family,
            alpha,
            beta,
            gamma_disp,
            delta_logx: None,
            delta_logxp: None,
            noise,
            sampler: Sampler::for_law(noise),
        })
    }

    pub fn deterministic(alpha: f64, beta: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Deterministic, alpha, beta, 0.0)
    }

    pub fn lognormal(alpha: f64, beta: f64, gamma_disp: f64) -> Result<Self, KernelError> {
        Self::new(
            KernelFamily::LognormalMultiplicative,
            alpha,
            beta,
            gamma_disp,
        )
    }

    pub fn gamma(alpha: f64, beta: f64, gamma_disp: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::GammaMultiplicative, alpha, beta, gamma_disp)
    }

    /// Attach claimed bounds on `|d log w / d log x|` and `|d log w / d log x'|`.
    /// `None` means unbounded.
    pub fn with_log_derivative_bounds(
        mut self,
        input: Option<f64>,
        output: Option<f64>,
    ) -> Result<Self, KernelError> {
        for (name, b) in [("delta_logx", input), ("delta_logxp", output)] {
            if let Some(b) = b {
                if !(b > 0.0) {
                    return Err(KernelError::InvalidParameter(format!(
                        "{name} must be > 0 (got {b})"
                    )));
                }
            }
        }
        self.delta_logx = input;
        self.delta_logxp = output;
        Ok(self)
    }

    /// Same family and dispersion with new growth coefficients.
    pub fn with_coefficients(&self, alpha: f64, beta: f64) -> Result<Self, KernelError> {
        if alpha == self.alpha && beta == self.beta {
            return Ok(self.clone());
        }
        let k = Self::new(self.family, alpha, beta, self.gamma_disp)?;
        k.with_log_derivative_bounds(self.delta_logx, self.delta_logxp)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma_disp(&self) -> f64 {
        self.gamma_disp
    }
    pub fn delta_logx(&self) -> Option<f64> {
        self.delta_logx
    }
    pub fn delta_logxp(&self) -> Option<f64> {
        self.delta_logxp
    }
    pub fn noise(&self) -> Option<NoiseLaw> {
        self.noise
    }
    pub fn has_density(&self) -> bool {
        self.family != KernelFamily::Deterministic
    }

    /// Larger of the two claimed log-derivative bounds, if both are finite.
    pub fn max_log_derivative_bound(&self) -> Option<f64> {
        Some(self.delta_logx?.max(self.delta_logxp?))
    }

    pub fn conditional_mean(&self, x: f64) -> f64 {
        self.alpha * x + self.beta
    }

    pub fn conditional_variance(&self, x: f64) -> f64 {
        self.gamma_disp * self.gamma_disp * x * x
    }

    pub fn conditional_law(&self, x: f64) -> Result<ConditionalLaw, KernelError> {
        if x < 0.0 || !x.is_finite() {
            return Err(KernelError::NegativeWealth(x));
        }
        Ok(match self.noise {
            Some(noise) if x > 0.0 => ConditionalLaw::Scaled {
                scale: x,
                shift: self.beta,
                noise,
            },
            _ => ConditionalLaw::PointMass(self.conditional_mean(x)),
        })
    }

    /// Draw `x'` given `x` from the caller's stream.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        x: f64,
        rng: &mut R,
    ) -> Result<f64, KernelError> {
        if x < 0.0 || !x.is_finite() {
            return Err(KernelError::NegativeWealth(x));
        }
        Ok(self.sample_unchecked(x, rng))
    }

    #[inline]
    pub(crate) fn sample_unchecked<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        if x == 0.0 || self.noise.is_none() {
            return self.conditional_mean(x);
        }
        x * self.sampler.draw(rng) + self.beta
    }

    /// Draw `x'` with an arbitrary conditional mean `target >= 0` and the
    /// kernel's dispersion `gamma_disp * x`.
    ///
    /// The carrier growth factor is `min(alpha, target / x)` and the rest of
    /// the mean is an additive shift, so the draw never goes negative and
    /// coincides with [`sample_transition`](Self::sample_transition) when
    /// `target = alpha * x + beta`.
    pub(crate) fn sample_with_mean<R: Rng + ?Sized>(
        &self,
        x: f64,
        target: f64,
        rng: &mut R,
    ) -> f64 {
        if x == 0.0 || self.noise.is_none() {
            return target;
        }
        let carrier = self.alpha.min(target / x);
        let shift = (target - carrier * x).max(0.0);
        if carrier == self.alpha {
            return x * self.sampler.draw(rng) + shift;
        }
        if carrier <= 0.0 {
            return shift;
        }
        let law = NoiseLaw::matching(self.family, carrier, self.gamma_disp);
        x * Sampler::for_law(law).draw(rng) + shift
    }

    fn density_law(&self, x: f64) -> Result<(f64, f64, NoiseLaw), KernelError> {
        let noise = self.noise.ok_or(KernelError::NoDensity)?;
        if x < 0.0 || !x.is_finite() {
            return Err(KernelError::NegativeWealth(x));
        }
        if x == 0.0 {
            return Err(KernelError::DegenerateAt(self.beta));
        }
        Ok((x, self.beta, noise))
    }

    /// Transition density `w(x -> x')`; zero for `x' <= beta`.
    pub fn density(&self, x: f64, xp: f64) -> Result<f64, KernelError> {
        let (scale, shift, noise) = self.density_law(x)?;
        if xp <= shift {
            return Ok(0.0);
        }
        Ok(noise.pdf((xp - shift) / scale) / scale)
    }

    pub fn ln_density(&self, x: f64, xp: f64) -> Result<f64, KernelError> {
        let (scale, shift, noise) = self.density_law(x)?;
        if xp <= shift {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(noise.ln_pdf((xp - shift) / scale) - scale.ln())
    }

    pub fn cdf(&self, x: f64, xp: f64) -> Result<f64, KernelError> {
        Ok(self.conditional_law(x)?.cdf(xp))
    }

    /// Central finite difference of `log w` in log coordinates of the chosen
    /// argument, with relative step [`LOG_PROBE_STEP`].
    pub fn log_derivative_probe(
        &self,
        x: f64,
        xp: f64,
        axis: ProbeAxis,
    ) -> Result<f64, KernelError> {
        let h = LOG_PROBE_STEP;
        let (up, down) = match axis {
            ProbeAxis::Input => (
                self.ln_density(x * h.exp(), xp)?,
                self.ln_density(x * (-h).exp(), xp)?,
            ),
            ProbeAxis::Output => (
                self.ln_density(x, xp * h.exp())?,
                self.ln_density(x, xp * (-h).exp())?,
            ),
        };
        let center = self.ln_density(x, xp)?;
        if !(up.is_finite() && down.is_finite() && center.is_finite()) {
            return Err(KernelError::OutsideSupport { x, xp });
        }
        Ok((up - down) / (2.0 * h))
    }

    /// Sorted magnitudes of the log-derivative at `n_samples` draws of `x'`
    /// given `x`, plus the number of draws where the probe was undefined.
    pub fn log_derivative_magnitudes<R: Rng + ?Sized>(
        &self,
        x: f64,
        axis: ProbeAxis,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<(Vec<f64>, usize), KernelError> {
        self.density_law(x)?;
        let mut values = Vec::with_capacity(n_samples);
        let mut undefined = 0;
        for _ in 0..n_samples {
            let xp = self.sample_unchecked(x, rng);
            match self.log_derivative_probe(x, xp, axis) {
                Ok(d) => values.push(d.abs()),
                Err(KernelError::OutsideSupport { .. }) => undefined += 1,
                Err(e) => return Err(e),
            }
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok((values, undefined))
    }

    /// Monte Carlo estimate of the conditional mass where
    /// `|d log w / d log (axis)| <= bound`.
    pub fn high_probability_mass<R: Rng + ?Sized>(
        &self,
        x: f64,
        bound: f64,
        axis: ProbeAxis,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<MassEstimate, KernelError> {
        if n_samples < 1000 {
            return Err(KernelError::InvalidParameter(format!(
                "n_samples must be >= 1000 (got {n_samples})"
            )));
        }
        let (values, undefined) = self.log_derivative_magnitudes(x, axis, n_samples, rng)?;
        Ok(MassEstimate::from_sorted(&values, undefined, bound))
    }

    /// Smallest bound whose high-probability mass reaches `target_mass` on
    /// both axes, i.e. an empirical `max(Delta, Delta')`.
    pub fn calibrate_log_derivative_bound<R: Rng + ?Sized>(
        &self,
        x: f64,
        target_mass: f64,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<LogDerivativeCalibration, KernelError> {
        let mut bounds = [0.0; 2];
        for (slot, axis) in bounds.iter_mut().zip([ProbeAxis::Input, ProbeAxis::Output]) {
            let (values, undefined) = self.log_derivative_magnitudes(x, axis, n_samples, rng)?;
            let total = values.len() + undefined;
            let needed = (target_mass * total as f64).ceil() as usize;
            if needed > values.len() || needed == 0 {
                return Err(KernelError::InvalidParameter(format!(
                    "cannot reach mass {target_mass} with {undefined} undefined probes out of {total}"
                )));
            }
            *slot = values[needed - 1];
        }
        Ok(LogDerivativeCalibration {
            delta_input: bounds[0],
            delta_output: bounds[1],
            mass: target_mass,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassEstimate {
    /// Fraction of all draws with a defined probe within the bound.
    pub within: f64,
    /// Fraction of draws where the probe was undefined (outside support).
    pub undefined: f64,
    pub samples: usize,
}

impl MassEstimate {
    pub fn from_sorted(sorted_magnitudes: &[f64], undefined: usize, bound: f64) -> Self {
        let total = sorted_magnitudes.len() + undefined;
        let inside = sorted_magnitudes.partition_point(|&v| v <= bound);
        Self {
            within: inside as f64 / total as f64,
            undefined: undefined as f64 / total as f64,
            samples: total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDerivativeCalibration {
    pub delta_input: f64,
    pub delta_output: f64,
    pub mass: f64,
}

impl LogDerivativeCalibration {
    pub fn max_bound(&self) -> f64 {
        self.delta_input.max(self.delta_output)
    }

    /// The inverse of the larger bound.
    pub fn gamma(&self) -> f64 {
        1.0 / self.max_bound()
    }
}
