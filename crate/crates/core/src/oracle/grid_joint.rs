use std::collections::HashMap;

use super::conjugate::normal_interval;
use crate::error::{Error, Result};
use crate::filters::StatePrior;
use crate::grid::GridAxis;
use crate::observation::{ObservationModel, ObservationRecord};
use crate::sde::{step_widths, SdeModel};

/// Prior over a `theta x state` grid. Both axes are node grids; the state axis
/// must be uniform. Its two end cells extend to infinity, so no mass is lost
/// when the kernel pushes it past the grid edge.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGridPrior {
    pub theta: GridAxis,
    pub theta_weights: Vec<f64>,
    pub x: GridAxis,
    pub x_weights: Vec<f64>,
}

impl JointGridPrior {
    pub fn new(theta: GridAxis, theta_weights: Vec<f64>, x: GridAxis, x_weights: Vec<f64>) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::config("the state axis needs at least 2 nodes"));
        }
        let theta_weights = normalized(theta_weights, theta.len(), "theta")?;
        let x_weights = normalized(x_weights, x.len(), "state")?;
        Ok(Self { theta, theta_weights, x, x_weights })
    }

    /// Uniform `theta` (weights proportional to cell lengths) and the cell
    /// masses of a one-dimensional state prior.
    pub fn from_state_prior(theta: GridAxis, x: GridAxis, prior: &StatePrior) -> Result<Self> {
        if prior.dim() != 1 {
            return Err(Error::usage("the joint grid oracle needs a one-dimensional state prior"));
        }
        let weights = (0..x.len())
            .map(|b| {
                let (lo, hi) = open_cell(&x, b);
                match prior {
                    StatePrior::Uniform(iv) => (hi.min(iv[0].hi) - lo.max(iv[0].lo)).max(0.0),
                    StatePrior::Gaussian { mean, std } if std[0] > 0.0 => {
                        normal_interval((lo - mean[0]) / std[0], (hi - mean[0]) / std[0])
                    }
                    StatePrior::Gaussian { mean, .. } => {
                        if b == nearest(&x, mean[0]) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect();
        let tw = theta.cell_lengths().to_vec();
        Self::new(theta, tw, x, weights)
    }
}

fn normalized(w: Vec<f64>, len: usize, what: &str) -> Result<Vec<f64>> {
    if w.len() != len {
        return Err(Error::config(format!("{what} weights: expected {len}, got {}", w.len())));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::config(format!("{what} weights must be finite and non-negative")));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::config(format!("{what} weights sum to zero")));
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Cell of state node `b`, with the end cells open to infinity.
fn open_cell(x: &GridAxis, b: usize) -> (f64, f64) {
    let half = 0.5 * x.cell_width();
    let node = x.nodes()[b];
    let lo = if b == 0 { f64::NEG_INFINITY } else { node - half };
    let hi = if b + 1 == x.len() { f64::INFINITY } else { node + half };
    (lo, hi)
}

fn nearest(x: &GridAxis, v: f64) -> usize {
    let pos = ((v - x.nodes()[0]) / x.cell_width()).round();
    pos.clamp(0.0, (x.len() - 1) as f64) as usize
}

/// Joint posterior at one observation time, `table[g * nx + b]` for theta
/// node `g` and state node `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGridPosterior {
    pub t: f64,
    pub theta_nodes: Vec<f64>,
    pub x_nodes: Vec<f64>,
    pub table: Vec<f64>,
}

impl JointGridPosterior {
    pub fn prob(&self, g: usize, b: usize) -> f64 {
        self.table[g * self.x_nodes.len() + b]
    }

    pub fn theta_marginal(&self) -> Vec<f64> {
        self.table.chunks_exact(self.x_nodes.len()).map(|r| r.iter().sum()).collect()
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.x_nodes.len()];
        for row in self.table.chunks_exact(self.x_nodes.len()) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// `(mean, variance)` of the state marginal over the nodes.
    pub fn x_moments(&self) -> (f64, f64) {
        moments(&self.x_marginal(), &self.x_nodes)
    }

    /// `(mean, variance)` of the theta marginal over the nodes.
    pub fn theta_moments(&self) -> (f64, f64) {
        moments(&self.theta_marginal(), &self.theta_nodes)
    }
}

fn moments(p: &[f64], v: &[f64]) -> (f64, f64) {
    let m: f64 = p.iter().zip(v).map(|(p, v)| p * v).sum();
    let m2: f64 = p.iter().zip(v).map(|(p, v)| p * v * v).sum();
    (m, (m2 - m * m).max(0.0))
}

/// Banded row-stochastic matrix: row `a` holds `entries[a]` starting at column `start[a]`.
struct Kernel {
    start: Vec<usize>,
    entries: Vec<Vec<f64>>,
}

impl Kernel {
    /// One Euler-Maruyama step of width `h` from every state node with
    /// `theta` held fixed, integrated over the destination cells and cut at
    /// 10 standard deviations.
    fn euler(model: &SdeModel, theta: f64, x: &GridAxis, h: f64) -> Result<Self> {
        let s = model.sigma()[0] * h.sqrt();
        let w = x.cell_width();
        let last = (x.len() - 1) as f64;
        let x0 = x.nodes()[0];
        let mut start = Vec::with_capacity(x.len());
        let mut entries = Vec::with_capacity(x.len());
        for &xa in x.nodes() {
            let mu = xa + model.drift_eval(0, theta, &[xa])? * h;
            if s == 0.0 {
                start.push(nearest(x, mu));
                entries.push(vec![1.0]);
                continue;
            }
            let lo = ((mu - 10.0 * s - x0) / w).floor().clamp(0.0, last) as usize;
            let hi = ((mu + 10.0 * s - x0) / w).ceil().clamp(0.0, last) as usize;
            let mut row: Vec<f64> = (lo..=hi)
                .map(|b| {
                    let (cl, ch) = open_cell(x, b);
                    normal_interval((cl - mu) / s, (ch - mu) / s)
                })
                .collect();
            let total: f64 = row.iter().sum();
            if !(total > 0.0) {
                return Err(Error::Numerical(format!("transition kernel lost all mass at x = {xa}")));
            }
            row.iter_mut().for_each(|v| *v /= total);
            start.push(lo);
            entries.push(row);
        }
        Ok(Self { start, entries })
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for ((&pa, &s), row) in p.iter().zip(&self.start).zip(&self.entries) {
            if pa == 0.0 {
                continue;
            }
            for (o, k) in out[s..s + row.len()].iter_mut().zip(row) {
                *o += pa * k;
            }
        }
    }
}

/// Brute-force filter on the joint `(theta, x)` grid for a scalar SDE with
/// one parameter. Between observations each `theta` row is moved by the
/// discretized Euler-Maruyama kernel over the same steps the particle filters
/// take; at an observation the table is multiplied by the likelihood and
/// normalized. Without an observation density (zero noise) the likelihood is
/// the indicator of the nodes whose measurement is closest to `y`.
pub fn grid_joint_filter(
    model: &SdeModel,
    prior: &JointGridPrior,
    observation: &ObservationModel,
    observations: &[ObservationRecord],
    dt: f64,
) -> Result<Vec<JointGridPosterior>> {
    if model.dim() != 1 || observation.state_dim() != 1 {
        return Err(Error::usage("the joint grid oracle handles one state and one parameter"));
    }
    let x = &prior.x;
    let (nt, nx) = (prior.theta.len(), x.len());
    let mut table: Vec<f64> =
        prior.theta_weights.iter().flat_map(|wt| prior.x_weights.iter().map(move |wx| wt * wx)).collect();
    let mut scratch = vec![0.0; nx];
    let mut kernels: Vec<HashMap<u64, Kernel>> = (0..nt).map(|_| HashMap::new()).collect();
    let mut out = Vec::with_capacity(observations.len());
    let mut t = 0.0;
    for (k, obs) in observations.iter().enumerate() {
        if !(obs.t > t) {
            return Err(Error::usage("observations must be strictly increasing in time after t = 0"));
        }
        if obs.y.len() != observation.obs_dim() {
            return Err(Error::usage(format!("observation {k} has the wrong dimension")));
        }
        let widths = step_widths(t, obs.t, dt)?;
        for (g, row) in table.chunks_exact_mut(nx).enumerate() {
            let theta = prior.theta.nodes()[g];
            for &h in &widths {
                let kernel = match kernels[g].entry(h.to_bits()) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => e.insert(Kernel::euler(model, theta, x, h)?),
                };
                kernel.apply(row, &mut scratch);
                row.copy_from_slice(&scratch);
            }
        }

        let lik = likelihood(observation, &obs.y, x.nodes());
        for row in table.chunks_exact_mut(nx) {
            for (p, l) in row.iter_mut().zip(&lik) {
                *p *= l;
            }
        }
        let total: f64 = table.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::WeightCollapse { time: obs.t });
        }
        table.iter_mut().for_each(|v| *v /= total);
        t = obs.t;
        out.push(JointGridPosterior {
            t,
            theta_nodes: prior.theta.nodes().to_vec(),
            x_nodes: x.nodes().to_vec(),
            table: table.clone(),
        });
    }
    Ok(out)
}

fn likelihood(observation: &ObservationModel, y: &[f64], nodes: &[f64]) -> Vec<f64> {
    if observation.has_likelihood() {
        let ll: Vec<f64> = nodes.iter().map(|&v| observation.log_likelihood(y, &[v])).collect();
        let peak = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return ll.iter().map(|l| (l - peak).exp()).collect();
    }
    let dist: Vec<f64> =
        nodes.iter().map(|&v| observation.measure(&[v]).iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()).collect();
    let best = dist.iter().copied().fold(f64::INFINITY, f64::min);
    dist.iter().map(|d| if *d == best { 1.0 } else { 0.0 }).collect()
}
