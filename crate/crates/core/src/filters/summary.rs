/// Posterior estimates emitted after each assimilated observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub t: f64,
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub param_mean: Vec<f64>,
    pub param_std: Vec<f64>,
    /// Effective sample size of the weights attached to state particles.
    pub ess: f64,
    /// Distinct parameter particles after the step (particle-based filters only).
    pub distinct_theta: Option<usize>,
    /// Mixture marginal of each parameter over its grid nodes (RB-PF only).
    pub param_hist: Option<Vec<Vec<f64>>>,
}

/// Weighted mean and standard deviation of `dim`-vectors.
pub(crate) fn weighted_moments<'a, I>(weights: &[f64], values: I, dim: usize) -> (Vec<f64>, Vec<f64>)
where
    I: Iterator<Item = &'a [f64]> + Clone,
{
    let mut mean = vec![0.0; dim];
    for (w, v) in weights.iter().zip(values.clone()) {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += w * x;
        }
    }
    let mut var = vec![0.0; dim];
    for (w, v) in weights.iter().zip(values) {
        for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
            *s += w * (x - m) * (x - m);
        }
    }
    (mean, var.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// Number of distinct parameter vectors (bitwise comparison).
pub(crate) fn count_distinct<'a>(thetas: impl Iterator<Item = &'a [f64]>) -> usize {
    let mut keys: Vec<Vec<u64>> = thetas.map(|t| t.iter().map(|v| v.to_bits()).collect()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}
