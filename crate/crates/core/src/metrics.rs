//! Concentration statistics on a finite wealth ensemble.
//!
//! The Gini coefficient follows the pair convention where both agents are
//! drawn independently with replacement, `G = sum_ij |x_i - x_j| / (2 N^2 mu)`.
//! Under this convention the largest value a population of `N` can reach is
//! `1 - 1/N`. Standard deviations use divisor `N`.

use thiserror::Error;

use crate::rng::{Domain, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("Gini undefined: population mean is zero")]
    ZeroMean,
    #[error("need at least 2 agents (got {0})")]
    TooFewAgents(usize),
    #[error("wealth must be finite and nonnegative (agent {index}: {value})")]
    InvalidWealth { index: usize, value: f64 },
}

fn validate(wealth: &[f64]) -> Result<f64, MetricsError> {
    if wealth.len() < 2 {
        return Err(MetricsError::TooFewAgents(wealth.len()));
    }
    if let Some((index, &value)) = wealth
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
    {
        return Err(MetricsError::InvalidWealth { index, value });
    }
    let mean = mean(wealth);
    if mean <= 0.0 {
        return Err(MetricsError::ZeroMean);
    }
    Ok(mean)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    sort_ascending(&mut v);
    v
}

/// Ascending sort of finite values. Radix on the IEEE bit pattern; ensemble
/// snapshots are large enough for this to matter.
pub fn sort_ascending(values: &mut [f64]) {
    radsort::sort(values);
}

/// `(1/N^2) sum_ij |v_i - v_j|` for ascending `sorted`.
///
/// Uses `sum_ij |v_i - v_j| = 2 sum_i (2i - N - 1) v_(i)` with 1-based ranks.
pub fn mean_abs_difference_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * v)
        .sum();
    2.0 * weighted / (n * n)
}

/// Mean absolute difference over all ordered pairs of arbitrary reals.
pub fn mean_abs_difference(values: &[f64]) -> f64 {
    mean_abs_difference_sorted(&sorted_copy(values))
}

/// Gini coefficient in `O(N log N)`.
pub fn gini(wealth: &[f64]) -> Result<f64, MetricsError> {
    validate(wealth)?;
    Ok(gini_of_sorted(&sorted_copy(wealth)))
}

/// Gini of an ascending, validated population.
pub fn gini_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * v)
        .sum();
    (weighted / (n * total)).max(0.0)
}

/// Direct double sum over all ordered pairs. Reference for tests; `O(N^2)`.
pub fn gini_pairwise_oracle(wealth: &[f64]) -> Result<f64, MetricsError> {
    let mu = validate(wealth)?;
    let n = wealth.len() as f64;
    let mut sum = 0.0;
    for &a in wealth {
        for &b in wealth {
            sum += (a - b).abs();
        }
    }
    Ok(sum / (2.0 * n * n * mu))
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(wealth: &[f64]) -> Result<f64, MetricsError> {
    let mu = validate(wealth)?;
    Ok(std_dev_about(wealth, mu) / mu)
}

fn std_dev_about(values: &[f64], mu: f64) -> f64 {
    (values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Fraction of agents with wealth strictly above `kappa * mean`.
pub fn tail_probability(wealth: &[f64], kappa: f64) -> Result<f64, MetricsError> {
    let mu = validate(wealth)?;
    let threshold = kappa * mu;
    Ok(wealth.iter().filter(|&&v| v > threshold).count() as f64 / wealth.len() as f64)
}

fn tail_probability_sorted(sorted: &[f64], threshold: f64) -> f64 {
    let at_or_below = sorted.partition_point(|&v| v <= threshold);
    (sorted.len() - at_or_below) as f64 / sorted.len() as f64
}

/// Per-snapshot statistics consumed by the bound checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMetrics {
    pub t: u64,
    pub mu: f64,
    pub sigma: f64,
    pub cv: f64,
    pub gini: f64,
    /// `(kappa, P(x > kappa * mu))` in the order of the configured grid.
    pub tail_probs: Vec<(f64, f64)>,
}

impl SnapshotMetrics {
    pub fn compute(t: u64, wealth: &[f64], kappas: &[f64]) -> Result<Self, MetricsError> {
        Self::from_sorted(t, &sorted_copy(wealth), kappas)
    }

    /// Same as [`compute`](Self::compute) for an ascending population.
    pub fn from_sorted(t: u64, sorted: &[f64], kappas: &[f64]) -> Result<Self, MetricsError> {
        let mu = validate(sorted)?;
        let sigma = std_dev_about(sorted, mu);
        Ok(Self {
            t,
            mu,
            sigma,
            cv: sigma / mu,
            gini: gini_of_sorted(sorted),
            tail_probs: kappas
                .iter()
                .map(|&k| (k, tail_probability_sorted(sorted, k * mu)))
                .collect(),
        })
    }

    pub fn tail(&self, kappa: f64) -> Option<f64> {
        self.tail_probs
            .iter()
            .find(|(k, _)| *k == kappa)
            .map(|&(_, p)| p)
    }
}

/// Bootstrap standard errors of the plug-in `CV^2` and Gini.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapErrors {
    pub cv2: f64,
    pub gini: f64,
    pub resamples: usize,
}

const BOOTSTRAP_BATCH: usize = 4096;

/// Add `n` uniform draws from `0..n` to `counts`, by multiply-shift with
/// rejection of the biased low range.
fn draw_indices(rng: &mut Stream, n: usize, words: &mut [u32], counts: &mut [u32]) {
    let range = n as u32;
    let threshold = range.wrapping_neg() % range;
    let mut drawn = 0;
    while drawn < n {
        rng.fill_u32(words);
        for &w in words.iter() {
            let m = u64::from(w) * u64::from(range);
            if (m as u32) < threshold {
                continue;
            }
            counts[(m >> 32) as usize] += 1;
            drawn += 1;
            if drawn == n {
                return;
            }
        }
    }
}

/// Resample the ascending population `resamples` times with replacement.
///
/// Each resample is stored as multiplicities over the sorted values, so its
/// Gini follows from the rank identity in one linear pass without sorting.
/// Resample `b` draws from the bootstrap stream `(seed, major, b)`.
pub fn bootstrap_errors(
    sorted: &[f64],
    resamples: usize,
    seed: u64,
    major: u32,
) -> BootstrapErrors {
    let n = sorted.len();
    let nf = n as f64;
    let mut counts = vec![0u32; n];
    let mut words = vec![0u32; BOOTSTRAP_BATCH];
    let (mut s_cv, mut ss_cv, mut s_g, mut ss_g) = (0.0, 0.0, 0.0, 0.0);
    for b in 0..resamples {
        let mut rng = Stream::new(seed, Domain::Bootstrap, major, b as u32);
        counts.iter_mut().for_each(|c| *c = 0);
        draw_indices(&mut rng, n, &mut words, &mut counts);
        let (mut sum, mut sq, mut weighted, mut rank) = (0.0, 0.0, 0.0, 0.0);
        // Zero counts contribute nothing; skipping them would only add
        // unpredictable branches.
        for (&x, &c) in sorted.iter().zip(&counts) {
            let c = f64::from(c);
            sum += c * x;
            sq += c * x * x;
            // Ranks rank+1 ..= rank+c each contribute (2j - N - 1) x.
            weighted += c * (2.0 * rank + c - nf) * x;
            rank += c;
        }
        let mu = sum / nf;
        let (cv2, g) = if mu > 0.0 {
            (
                (sq / nf) / (mu * mu) - 1.0,
                (weighted / (nf * sum)).max(0.0),
            )
        } else {
            (0.0, 0.0)
        };
        s_cv += cv2;
        ss_cv += cv2 * cv2;
        s_g += g;
        ss_g += g * g;
    }
    let sd = |s: f64, ss: f64| {
        if resamples < 2 {
            return f64::NAN;
        }
        let r = resamples as f64;
        ((ss - s * s / r) / (r - 1.0)).max(0.0).sqrt()
    };
    BootstrapErrors {
        cv2: sd(s_cv, ss_cv),
        gini: sd(s_g, ss_g),
        resamples,
    }
}
