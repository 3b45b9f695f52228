//! Grid-based conditional parameter posteriors.
//!
//! Each parameter `theta_i` gets its own one-dimensional grid carrying the
//! log-density of `theta_i` given the simulated state path. Given the path,
//! the marginals are conditionally independent, so a particle stores `n`
//! grids of `G` nodes instead of one grid of `G^n` nodes.
//!
//! Cells: node `g` owns `[node - w/2, node + w/2]` clipped to the support,
//! so the two end cells are half as long as interior ones. Cell masses are
//! `exp(log_density) * cell_length`, normalized.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sde::{Interval, PathSegment, SdeModel};

/// Node placement shared by every particle's copy of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    support: Interval,
    nodes: Vec<f64>,
    cell_width: f64,
    cell_lengths: Vec<f64>,
}

impl GridAxis {
    /// `count` equispaced nodes with the interval endpoints as first and last node.
    pub fn uniform(support: Interval, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::config(format!("a parameter grid needs at least 2 nodes, got {count}")));
        }
        if !(support.hi > support.lo) {
            return Err(Error::config(format!("parameter support [{}, {}] is empty", support.lo, support.hi)));
        }
        let w = support.width() / (count - 1) as f64;
        let mut nodes: Vec<f64> = (0..count).map(|g| support.lo + g as f64 * w).collect();
        nodes[count - 1] = support.hi;
        let mut cell_lengths = vec![w; count];
        cell_lengths[0] = 0.5 * w;
        cell_lengths[count - 1] = 0.5 * w;
        Ok(Self { support, nodes, cell_width: w, cell_lengths })
    }

    /// Single node, for a parameter whose value is known.
    pub fn point(value: f64) -> Self {
        Self { support: Interval::point(value), nodes: vec![value], cell_width: 0.0, cell_lengths: vec![1.0] }
    }

    pub fn support(&self) -> Interval {
        self.support
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn cell_lengths(&self) -> &[f64] {
        &self.cell_lengths
    }

    /// `[lo, hi]` of the cell owned by node `g`.
    pub fn cell_bounds(&self, g: usize) -> (f64, f64) {
        let half = 0.5 * self.cell_width;
        let node = self.nodes[g];
        ((node - half).max(self.support.lo), (node + half).min(self.support.hi))
    }
}

/// Discretized log-density of one parameter.
///
/// The raw accumulated log-density is kept alongside its maximum, so the
/// exposed [`log_density`](Self::log_density) is always max-normalized and two
/// consecutive updates give bit-identical results to one update over the
/// concatenated path.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    axis: Arc<GridAxis>,
    log_accum: Vec<f64>,
    peak: f64,
}

impl ParameterGrid {
    /// Uniform prior over `count` nodes spanning `support`.
    pub fn init_uniform(support: Interval, count: usize) -> Result<Self> {
        Ok(Self::uniform_on(Arc::new(GridAxis::uniform(support, count)?)))
    }

    pub fn uniform_on(axis: Arc<GridAxis>) -> Self {
        let log_accum = vec![0.0; axis.len()];
        Self { axis, log_accum, peak: 0.0 }
    }

    pub fn point_mass(value: f64) -> Self {
        Self::uniform_on(Arc::new(GridAxis::point(value)))
    }

    /// Grid with an arbitrary (unnormalized) log-density at the nodes.
    pub fn from_log_density(axis: Arc<GridAxis>, log_density: Vec<f64>) -> Result<Self> {
        if log_density.len() != axis.len() {
            return Err(Error::usage("log-density length does not match the grid"));
        }
        if log_density.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::usage("log-density contains NaN or +inf"));
        }
        let peak = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::usage("log-density has no finite entry"));
        }
        Ok(Self { axis, log_accum: log_density, peak })
    }

    pub fn axis(&self) -> &Arc<GridAxis> {
        &self.axis
    }

    pub fn nodes(&self) -> &[f64] {
        self.axis.nodes()
    }

    pub fn len(&self) -> usize {
        self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }

    pub fn cell_width(&self) -> f64 {
        self.axis.cell_width()
    }

    /// Max-normalized log-density at node `g` (the maximum is exactly 0).
    pub fn log_density(&self, g: usize) -> f64 {
        self.log_accum[g] - self.peak
    }

    pub fn log_densities(&self) -> Vec<f64> {
        self.log_accum.iter().map(|v| v - self.peak).collect()
    }

    /// Unnormalized cell masses.
    fn masses(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_accum.iter().zip(self.axis.cell_lengths()).map(move |(a, len)| (a - self.peak).exp() * len)
    }

    /// Probability of each node's cell; sums to 1.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.masses().collect();
        let total: f64 = p.iter().sum();
        for v in p.iter_mut() {
            *v /= total;
        }
        p
    }

    /// Normalized piecewise-constant density value on each cell.
    pub fn densities(&self) -> Vec<f64> {
        if self.len() == 1 {
            return vec![1.0];
        }
        self.probabilities().iter().zip(self.axis.cell_lengths()).map(|(p, l)| p / l).collect()
    }

    /// Integrates the log-likelihood of the parameter along `seg` into this
    /// grid: for each node `theta` and inner step `k`,
    ///
    /// ```text
    /// log rho(theta) += f_i(theta, x_k) / sigma_i^2 * (dx_i,k - f_i(theta, x_k) / 2 * dt_k)
    /// ```
    ///
    /// with the drift evaluated at the left end of each step.
    pub fn zakai_update(&mut self, dim: usize, model: &SdeModel, seg: &PathSegment) -> Result<()> {
        if dim >= model.dim() || seg.dim() != model.dim() {
            return Err(Error::usage(format!("grid dimension {dim} does not fit the model/path")));
        }
        if self.len() == 1 {
            return Ok(());
        }
        let sigma = model.sigma()[dim];
        if !(sigma > 0.0) {
            return Err(Error::config(format!("sigma_{dim} must be positive to update its parameter grid")));
        }
        let inv_var = 1.0 / (sigma * sigma);
        let drift = model.drift();
        let nodes = self.axis.nodes();
        let mut terms = vec![0.0; nodes.len()];
        for (k, &h) in seg.step_widths().iter().enumerate() {
            let x = seg.state(k);
            let dx = seg.increment(k, dim);
            drift.eval_nodes(dim, nodes, x, &mut terms);
            for t in terms.iter_mut() {
                let f = *t;
                *t = inv_var * f * (dx - 0.5 * f * h);
            }
            if !terms.iter().sum::<f64>().is_finite() {
                let g = terms.iter().position(|t| !t.is_finite()).unwrap_or(0);
                return Err(Error::GridNumerical { theta: nodes[g], step: k });
            }
            for (a, t) in self.log_accum.iter_mut().zip(&terms) {
                *a += t;
            }
        }
        self.peak = self.log_accum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !self.peak.is_finite() {
            return Err(Error::Numerical("parameter grid lost all mass".into()));
        }
        Ok(())
    }

    /// Draws a node by cell mass, then a uniform point within its clipped cell.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.len() == 1 {
            return self.axis.nodes()[0];
        }
        let total: f64 = self.masses().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = 0;
        // falls through to the last cell with mass if rounding leaves u >= acc
        for (g, m) in self.masses().enumerate().filter(|(_, m)| *m > 0.0) {
            pick = g;
            acc += m;
            if u < acc {
                break;
            }
        }
        let (lo, hi) = self.axis.cell_bounds(pick);
        lo + (hi - lo) * rng.random::<f64>()
    }

    /// Mean and standard deviation of the node values under the cell probabilities.
    pub fn moments(&self) -> (f64, f64) {
        let p = self.probabilities();
        let nodes = self.nodes();
        let mean: f64 = p.iter().zip(nodes).map(|(p, v)| p * v).sum();
        let var: f64 = p.iter().zip(nodes).map(|(p, v)| p * (v - mean).powi(2)).sum();
        (mean, var.max(0.0).sqrt())
    }
}

/// One grid per parameter; no cross-dimension coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSet {
    pub grids: Vec<ParameterGrid>,
}

impl MarginalSet {
    pub fn new(grids: Vec<ParameterGrid>) -> Self {
        Self { grids }
    }

    /// Uniform grids over each support; point supports become one-node grids.
    pub fn uniform_prior(support: &[Interval], count: usize) -> Result<Self> {
        let grids = support
            .iter()
            .map(|iv| {
                if iv.is_point() {
                    Ok(ParameterGrid::point_mass(iv.lo))
                } else {
                    ParameterGrid::init_uniform(*iv, count)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { grids })
    }

    pub fn dim(&self) -> usize {
        self.grids.len()
    }

    /// Independent draw of every `theta_i` from its grid.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.grids.iter().map(|g| g.sample(rng)).collect()
    }

    pub fn zakai_update(&mut self, model: &SdeModel, seg: &PathSegment) -> Result<()> {
        for (i, g) in self.grids.iter_mut().enumerate() {
            g.zakai_update(i, model, seg)?;
        }
        Ok(())
    }

    pub fn moments(&self) -> Vec<(f64, f64)> {
        self.grids.iter().map(ParameterGrid::moments).collect()
    }
}

/// `0.5 * sum |p - q|` for two discrete distributions on the same cells.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Total variation between the piecewise-constant densities of two grids on
/// the same support (the node sets may differ).
pub fn density_total_variation(a: &ParameterGrid, b: &ParameterGrid) -> f64 {
    let mut edges: Vec<f64> = Vec::new();
    for grid in [a, b] {
        for g in 0..grid.len() {
            let (lo, hi) = grid.axis.cell_bounds(g);
            edges.push(lo);
            edges.push(hi);
        }
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let (da, db) = (a.densities(), b.densities());
    let density_at = |grid: &ParameterGrid, d: &[f64], x: f64| {
        let w = grid.cell_width();
        let lo = grid.axis.support().lo;
        let g = (((x - lo) / w) + 0.5).floor().clamp(0.0, (grid.len() - 1) as f64) as usize;
        d[g]
    };
    0.5 * edges
        .windows(2)
        .map(|e| {
            let mid = 0.5 * (e[0] + e[1]);
            (density_at(a, &da, mid) - density_at(b, &db, mid)).abs() * (e[1] - e[0])
        })
        .sum::<f64>()
}
