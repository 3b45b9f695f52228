//! Weight normalization and resampling kernels shared by every filter.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResamplingScheme {
    #[default]
    Systematic,
    Multinomial,
}

impl ResamplingScheme {
    pub fn resample<R: Rng + ?Sized>(self, weights: &[f64], rng: &mut R) -> Vec<usize> {
        match self {
            ResamplingScheme::Systematic => systematic_resample(weights, rng),
            ResamplingScheme::Multinomial => multinomial_resample(weights, rng),
        }
    }
}

/// Largest entry, ignoring NaN. `-inf` when every entry is `-inf` or NaN.
pub fn max_log_weight(log_weights: &[f64]) -> f64 {
    log_weights.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max)
}

/// `log sum exp`, or `-inf` for an all `-inf` input.
pub fn log_sum_exp(log_weights: &[f64]) -> f64 {
    let max = max_log_weight(log_weights);
    if !max.is_finite() {
        return max;
    }
    max + log_weights.iter().map(|lw| (lw - max).exp()).sum::<f64>().ln()
}

/// Turns log-weights into probabilities by subtracting the maximum before
/// exponentiating. `time` only labels the collapse error.
pub fn normalize_at(log_weights: &[f64], time: f64) -> Result<Vec<f64>> {
    let max = max_log_weight(log_weights);
    if !max.is_finite() || log_weights.iter().any(|v| v.is_nan()) {
        // +inf is as unusable as an all -inf vector
        return Err(Error::WeightCollapse { time });
    }
    let mut w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    Ok(w)
}

pub fn normalize(log_weights: &[f64]) -> Result<Vec<f64>> {
    normalize_at(log_weights, f64::NAN)
}

/// Effective sample size `1 / sum w^2` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling: one uniform offset, `N` evenly spaced positions.
/// Index `j` appears `floor(N w_j)` or `ceil(N w_j)` times.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let u: f64 = rng.random();
    let step = 1.0 / n as f64;
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let pos = (i as f64 + u) * step;
        while pos >= cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// `N` independent categorical draws.
pub fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(n - 1)
        })
        .collect()
}
