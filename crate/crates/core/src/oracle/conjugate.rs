use std::f64::consts::SQRT_2;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::GridAxis;
use crate::sde::{Interval, PathSegment};

/// Posterior of `theta` for a drift `f(theta, x) = theta * g(x)` under a
/// uniform prior, given one recorded path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConjugatePosterior {
    /// The path carries no information (`sum g^2 dt = 0`): the prior.
    Flat { support: Interval },
    /// `N(mean, 1 / precision)` restricted to `support`.
    TruncatedGaussian { mean: f64, precision: f64, support: Interval },
}

/// The path log-likelihood is
/// `theta / sigma^2 * sum g(x_k) dx_k - theta^2 / (2 sigma^2) * sum g(x_k)^2 dt_k`,
/// a Gaussian in `theta` with precision `sum g^2 dt / sigma^2` and mean
/// `sum g dx / sum g^2 dt`.
pub fn conjugate_posterior(
    path: &PathSegment,
    dim: usize,
    g: impl Fn(&[f64]) -> f64,
    sigma: f64,
    support: Interval,
) -> Result<ConjugatePosterior> {
    if dim >= path.dim() {
        return Err(Error::usage(format!("dimension {dim} out of range")));
    }
    if !(sigma > 0.0) {
        return Err(Error::usage("sigma must be positive"));
    }
    let mut sum_gdx = 0.0;
    let mut sum_g2dt = 0.0;
    for (k, &h) in path.step_widths().iter().enumerate() {
        let gx = g(path.state(k));
        sum_gdx += gx * path.increment(k, dim);
        sum_g2dt += gx * gx * h;
    }
    if sum_g2dt == 0.0 {
        return Ok(ConjugatePosterior::Flat { support });
    }
    Ok(ConjugatePosterior::TruncatedGaussian {
        mean: sum_gdx / sum_g2dt,
        precision: sum_g2dt / (sigma * sigma),
        support,
    })
}

/// `P(z1 < Z < z2)` for standard normal `Z`, accurate in both tails.
pub(super) fn normal_interval(z1: f64, z2: f64) -> f64 {
    if z1 >= 0.0 {
        0.5 * (erfc(z1 / SQRT_2) - erfc(z2 / SQRT_2))
    } else if z2 <= 0.0 {
        0.5 * (erfc(-z2 / SQRT_2) - erfc(-z1 / SQRT_2))
    } else {
        1.0 - 0.5 * (erfc(-z1 / SQRT_2) + erfc(z2 / SQRT_2))
    }
}

/// `ln P(Z > z)` for `z >= 0`; asymptotic series beyond `z = 30`.
fn log_upper_tail(z: f64) -> f64 {
    if z == f64::INFINITY {
        f64::NEG_INFINITY
    } else if z < 30.0 {
        (0.5 * erfc(z / SQRT_2)).ln()
    } else {
        let r = 1.0 / (z * z);
        let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r));
        -0.5 * z * z - (z * (2.0 * std::f64::consts::PI).sqrt()).ln() + series.ln()
    }
}

/// `ln P(z1 < Z < z2)`, finite even when the probability underflows.
fn log_normal_interval(z1: f64, z2: f64) -> f64 {
    if z1 >= 0.0 {
        let (l1, l2) = (log_upper_tail(z1), log_upper_tail(z2));
        l1 + (-(l2 - l1).exp()).ln_1p()
    } else if z2 <= 0.0 {
        log_normal_interval(-z2, -z1)
    } else {
        normal_interval(z1, z2).ln()
    }
}

impl ConjugatePosterior {
    pub fn support(&self) -> Interval {
        match *self {
            ConjugatePosterior::Flat { support } | ConjugatePosterior::TruncatedGaussian { support, .. } => support,
        }
    }

    /// Mode of the truncated law (midpoint of the support when flat).
    pub fn mode(&self) -> f64 {
        match *self {
            ConjugatePosterior::Flat { support } => support.midpoint(),
            ConjugatePosterior::TruncatedGaussian { mean, support, .. } => mean.clamp(support.lo, support.hi),
        }
    }

    /// Probability of `[a, b]` (clipped to the support).
    pub fn probability(&self, a: f64, b: f64) -> f64 {
        let s = self.support();
        let (a, b) = (a.max(s.lo), b.min(s.hi));
        if b <= a {
            return 0.0;
        }
        match *self {
            ConjugatePosterior::Flat { support } => (b - a) / support.width(),
            ConjugatePosterior::TruncatedGaussian { mean, precision, support } => {
                let sd_inv = precision.sqrt();
                let z = |v: f64| (v - mean) * sd_inv;
                (log_normal_interval(z(a), z(b)) - log_normal_interval(z(support.lo), z(support.hi))).exp()
            }
        }
    }

    /// Exact mass of every cell of `axis`.
    pub fn cell_masses(&self, axis: &GridAxis) -> Vec<f64> {
        (0..axis.len())
            .map(|g| {
                let (lo, hi) = axis.cell_bounds(g);
                self.probability(lo, hi)
            })
            .collect()
    }
}
