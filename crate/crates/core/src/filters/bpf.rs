use rayon::prelude::*;

use super::summary::{count_distinct, weighted_moments};
use super::{jitter_theta, particle_err, reweight, PosteriorSummary, Problem, StepContext};
use crate::error::Result;
use crate::observation::ObservationRecord;
use crate::resampling::ess;
use crate::rng::{Purpose, Streams};

/// A `(theta, x)` pair; `theta` stays fixed while the state is simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct BpfParticle {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
}

/// BPF/RPF population with its current log-weights (all zero right after
/// resampling).
#[derive(Debug, Clone, PartialEq)]
pub struct BpfEnsemble {
    pub t: f64,
    pub particles: Vec<BpfParticle>,
    pub log_weights: Vec<f64>,
}

impl BpfEnsemble {
    /// `N` particles: `x` from the state prior, `theta` uniform on the prior box.
    pub fn from_prior(problem: &Problem, n: usize, streams: &Streams) -> Self {
        let support = problem.model.param_support();
        let particles = (0..n)
            .map(|j| {
                let mut rng = streams.rng(Purpose::Init, 0, j as u64);
                let x = problem.state_prior.sample(&mut rng);
                let theta = support.iter().map(|iv| iv.sample_uniform(&mut rng)).collect();
                BpfParticle { theta, x }
            })
            .collect();
        Self { t: 0.0, particles, log_weights: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn distinct_theta(&self) -> usize {
        count_distinct(self.particles.iter().map(|p| p.theta.as_slice()))
    }

    /// Summary under the current weights.
    pub fn summary(&self) -> PosteriorSummary {
        let w = crate::resampling::normalize(&self.log_weights).expect("ensemble weights are normalizable");
        let mut s = summarize(&self.particles, &w, self.t);
        s.distinct_theta = Some(self.distinct_theta());
        s
    }
}

fn summarize(particles: &[BpfParticle], w: &[f64], t: f64) -> PosteriorSummary {
    let n = particles.first().map_or(0, |p| p.x.len());
    let (state_mean, state_std) = weighted_moments(w, particles.iter().map(|p| p.x.as_slice()), n);
    let (param_mean, param_std) = weighted_moments(w, particles.iter().map(|p| p.theta.as_slice()), n);
    PosteriorSummary {
        t,
        state_mean,
        state_std,
        param_mean,
        param_std,
        ess: ess(w),
        distinct_theta: None,
        param_hist: None,
    }
}

/// One bootstrap step: simulate every particle over `[t0, t1]` with its own
/// `theta`, weight by the likelihood of `obs`, summarize, resample.
pub fn bpf_step(ens: &mut BpfEnsemble, obs: &ObservationRecord, ctx: &StepContext) -> Result<PosteriorSummary> {
    let problem = ctx.problem;
    let loglik: Vec<f64> = ens
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(j, p)| {
            let mut rng = ctx.streams.rng(Purpose::Propagate, ctx.step, j as u64);
            problem.model.propagate(&mut p.x, &p.theta, ctx.t0, &ctx.widths, &mut rng).map_err(particle_err(j))?;
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
    summary.distinct_theta = Some(ens.distinct_theta());
    Ok(summary)
}

/// [`bpf_step`] followed by truncated Gaussian jitter of every `theta`.
/// With `c = 0` this is exactly the bootstrap step.
pub fn rpf_step(ens: &mut BpfEnsemble, obs: &ObservationRecord, ctx: &StepContext) -> Result<PosteriorSummary> {
    let mut summary = bpf_step(ens, obs, ctx)?;
    let c = ctx.config.jitter;
    if c > 0.0 {
        let support = ctx.problem.model.param_support();
        ens.particles.par_iter_mut().enumerate().try_for_each(|(j, p)| {
            let mut rng = ctx.streams.rng(Purpose::Jitter, ctx.step, j as u64);
            jitter_theta(&mut p.theta, support, c, &mut rng)
        })?;
        summary.distinct_theta = Some(ens.distinct_theta());
    }
    Ok(summary)
}
