use rayon::prelude::*;

use super::summary::weighted_moments;
use super::{particle_err, reweight, PosteriorSummary, Problem, StepContext};
use crate::error::Result;
use crate::grid::MarginalSet;
use crate::observation::ObservationRecord;
use crate::resampling::{ess, normalize};
use crate::rng::{Purpose, Streams};
use crate::sde::simulate_steps;

/// A state particle together with the grid marginals of every parameter
/// conditional on the particle's simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct RbpfParticle {
    pub x: Vec<f64>,
    pub marginals: MarginalSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbpfEnsemble {
    pub t: f64,
    pub particles: Vec<RbpfParticle>,
    pub log_weights: Vec<f64>,
}

impl RbpfEnsemble {
    /// States from the prior; every grid starts as the uniform prior over its
    /// support (one node for a known parameter).
    pub fn from_prior(problem: &Problem, n: usize, grid: usize, streams: &Streams) -> Result<Self> {
        let prior = MarginalSet::uniform_prior(problem.model.param_support(), grid)?;
        let particles = (0..n)
            .map(|j| {
                let mut rng = streams.rng(Purpose::Init, 0, j as u64);
                RbpfParticle { x: problem.state_prior.sample(&mut rng), marginals: prior.clone() }
            })
            .collect();
        Ok(Self { t: 0.0, particles, log_weights: vec![0.0; n] })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn summary(&self) -> PosteriorSummary {
        let w = normalize(&self.log_weights).expect("ensemble weights are normalizable");
        summarize(&self.particles, &w, self.t)
    }

    /// Weighted mixture of the particles' grid probabilities for parameter `i`.
    pub fn mixture_marginal(&self, i: usize) -> Vec<f64> {
        let w = normalize(&self.log_weights).expect("ensemble weights are normalizable");
        let g = self.particles[0].marginals.grids[i].len();
        let mut hist = vec![0.0; g];
        for (p, wj) in self.particles.iter().zip(&w) {
            for (h, q) in hist.iter_mut().zip(p.marginals.grids[i].probabilities()) {
                *h += wj * q;
            }
        }
        hist
    }
}

/// State moments from the weighted particles; parameter moments from the
/// weighted mixture of grid marginals (law of total variance).
fn summarize(particles: &[RbpfParticle], w: &[f64], t: f64) -> PosteriorSummary {
    let n = particles.first().map_or(0, |p| p.x.len());
    let (state_mean, state_std) = weighted_moments(w, particles.iter().map(|p| p.x.as_slice()), n);

    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    let mut hist: Vec<Vec<f64>> =
        particles.first().map(|p| p.marginals.grids.iter().map(|g| vec![0.0; g.len()]).collect()).unwrap_or_default();
    for (p, wj) in particles.iter().zip(w) {
        if *wj == 0.0 {
            continue;
        }
        for (i, grid) in p.marginals.grids.iter().enumerate() {
            let probs = grid.probabilities();
            let mut m = 0.0;
            let mut m2 = 0.0;
            for ((h, q), v) in hist[i].iter_mut().zip(&probs).zip(grid.nodes()) {
                *h += wj * q;
                m += q * v;
                m2 += q * v * v;
            }
            first[i] += wj * m;
            second[i] += wj * m2;
        }
    }
    let param_std = first.iter().zip(&second).map(|(m, m2)| (m2 - m * m).max(0.0).sqrt()).collect();
    PosteriorSummary {
        t,
        state_mean,
        state_std,
        param_mean: first,
        param_std,
        ess: ess(w),
        distinct_theta: None,
        param_hist: Some(hist),
    }
}

/// One Rao-Blackwellized step. Per particle: draw `theta` from the product of
/// its grid marginals and hold it over `[t0, t1]`, simulate the state path,
/// integrate every grid along that path, and weight by the likelihood of
/// `obs` at the path's end. State and grids are resampled together.
pub fn rbpf_step(ens: &mut RbpfEnsemble, obs: &ObservationRecord, ctx: &StepContext) -> Result<PosteriorSummary> {
    let problem = ctx.problem;
    let model = &problem.model;
    let loglik: Vec<f64> = ens
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(j, p)| {
            let mut rng = ctx.streams.rng(Purpose::Propagate, ctx.step, j as u64);
            let theta = p.marginals.sample_theta(&mut rng);
            let seg = simulate_steps(model, &p.x, &theta, ctx.t0, ctx.t1, ctx.widths.clone(), &mut rng)
                .map_err(particle_err(j))?;
            p.marginals.zakai_update(model, &seg).map_err(particle_err(j))?;
            p.x.copy_from_slice(seg.last());
            Ok(problem.observation.log_likelihood(&obs.y, &p.x))
        })
        .collect::<Result<_>>()?;
    for (lw, ll) in ens.log_weights.iter_mut().zip(&loglik) {
        *lw += ll;
    }
    ens.t = ctx.t1;

    let rw = reweight(&ens.log_weights, ctx)?;
    let mut summary = summarize(&ens.particles, &rw.weights, ctx.t1);
    summary.ess = rw.ess;
    match rw.ancestors {
        Some(idx) => {
            ens.particles = idx.iter().map(|&a| ens.particles[a].clone()).collect();
            ens.log_weights.iter_mut().for_each(|v| *v = 0.0);
        }
        None => ens.log_weights = rw.weights.iter().map(|w| w.ln()).collect(),
    }
    Ok(summary)
}
