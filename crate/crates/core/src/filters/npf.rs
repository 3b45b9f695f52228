use rayon::prelude::*;

use super::summary::{count_distinct, weighted_moments};
use super::{jitter_theta, particle_err, reweight, PosteriorSummary, Problem, StepContext};
use crate::error::Result;
use crate::observation::ObservationRecord;
use crate::resampling::{ess, log_sum_exp, normalize};
use crate::rng::{Purpose, Streams};

/// Outer particle: one `theta` and `M` equally weighted inner states.
#[derive(Debug, Clone, PartialEq)]
pub struct NpfParticle {
    pub theta: Vec<f64>,
    /// `M * n` values, one state per row.
    pub states: Vec<f64>,
}

impl NpfParticle {
    pub fn state(&self, l: usize, n: usize) -> &[f64] {
        &self.states[l * n..(l + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpfEnsemble {
    pub t: f64,
    pub dim: usize,
    pub inner: usize,
    pub particles: Vec<NpfParticle>,
    /// Outer log-weights (zero after resampling).
    pub log_weights: Vec<f64>,
}

impl NpfEnsemble {
    pub fn from_prior(problem: &Problem, n: usize, m: usize, streams: &Streams) -> Self {
        let dim = problem.model.dim();
        let support = problem.model.param_support();
        let particles = (0..n)
            .map(|j| {
                let mut rng = streams.rng(Purpose::Init, 0, j as u64);
                let mut states = Vec::with_capacity(m * dim);
                for _ in 0..m {
                    states.extend(problem.state_prior.sample(&mut rng));
                }
                let theta = support.iter().map(|iv| iv.sample_uniform(&mut rng)).collect();
                NpfParticle { theta, states }
            })
            .collect();
        Self { t: 0.0, dim, inner: m, particles, log_weights: vec![0.0; n] }
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

    pub fn summary(&self) -> PosteriorSummary {
        let outer = normalize(&self.log_weights).expect("ensemble weights are normalizable");
        let inner = vec![1.0 / self.inner as f64; self.inner];
        let inner_w: Vec<&[f64]> = vec![&inner; self.len()];
        let mut s = summarize(self, &outer, &inner_w, self.t);
        s.distinct_theta = Some(self.distinct_theta());
        s
    }
}

/// Combines the layers: state particle `(j, l)` carries weight `W_j w_jl`.
fn summarize(ens: &NpfEnsemble, outer: &[f64], inner: &[&[f64]], t: f64) -> PosteriorSummary {
    let n = ens.dim;
    let flat_w: Vec<f64> = outer.iter().zip(inner).flat_map(|(wo, wi)| wi.iter().map(move |w| wo * w)).collect();
    let states = ens.particles.iter().flat_map(|p| p.states.chunks_exact(n));
    let (state_mean, state_std) = weighted_moments(&flat_w, states, n);
    let (param_mean, param_std) = weighted_moments(outer, ens.particles.iter().map(|p| p.theta.as_slice()), n);
    PosteriorSummary {
        t,
        state_mean,
        state_std,
        param_mean,
        param_std,
        ess: ess(&flat_w),
        distinct_theta: None,
        param_hist: None,
    }
}

/// One nested step. Each outer particle runs an inner bootstrap step with its
/// own `theta`; its outer weight is the sum of its inner weights. Then the
/// outer layer is resampled and every `theta` jittered with truncated
/// `N(0, c I)` noise.
pub fn npf_step(ens: &mut NpfEnsemble, obs: &ObservationRecord, ctx: &StepContext) -> Result<PosteriorSummary> {
    let problem = ctx.problem;
    let (n, m) = (ens.dim, ens.inner);

    // second layer: simulate and weight the inner states
    let inner_ll: Vec<Vec<f64>> = ens
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(j, p)| {
            p.states
                .chunks_exact_mut(n)
                .enumerate()
                .map(|(l, x)| {
                    let idx = (j * m + l) as u64;
                    let mut rng = ctx.streams.rng(Purpose::Propagate, ctx.step, idx);
                    problem.model.propagate(x, &p.theta, ctx.t0, &ctx.widths, &mut rng).map_err(particle_err(j))?;
                    Ok(problem.observation.log_likelihood(&obs.y, x))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    // first layer: w_j = sum_l w_jl
    for (lw, ll) in ens.log_weights.iter_mut().zip(&inner_ll) {
        *lw += log_sum_exp(ll);
    }
    ens.t = ctx.t1;
    let rw = reweight(&ens.log_weights, ctx)?;

    let inner_w: Vec<Vec<f64>> = inner_ll.iter().map(|ll| normalize(ll).unwrap_or_else(|_| vec![0.0; m])).collect();
    let inner_refs: Vec<&[f64]> = inner_w.iter().map(Vec::as_slice).collect();
    let mut summary = summarize(ens, &rw.weights, &inner_refs, ctx.t1);

    // inner resampling
    let scheme = ctx.config.resampling;
    ens.particles.par_iter_mut().zip(&inner_w).enumerate().for_each(|(j, (p, w))| {
        if m > 1 && w.iter().any(|v| *v > 0.0) {
            let mut rng = ctx.streams.rng(Purpose::InnerResample, ctx.step, j as u64);
            let idx = scheme.resample(w, &mut rng);
            let old = std::mem::take(&mut p.states);
            p.states = idx.iter().flat_map(|&a| old[a * n..(a + 1) * n].iter().copied()).collect();
        }
    });

    match rw.ancestors {
        Some(idx) => {
            ens.particles = idx.iter().map(|&a| ens.particles[a].clone()).collect();
            ens.log_weights.iter_mut().for_each(|v| *v = 0.0);
        }
        None => ens.log_weights = rw.weights.iter().map(|w| w.ln()).collect(),
    }

    let c = ctx.config.jitter;
    if c > 0.0 {
        let support = problem.model.param_support();
        ens.particles.par_iter_mut().enumerate().try_for_each(|(j, p)| {
            let mut rng = ctx.streams.rng(Purpose::Jitter, ctx.step, j as u64);
            jitter_theta(&mut p.theta, support, c, &mut rng)
        })?;
    }
    summary.distinct_theta = Some(ens.distinct_theta());
    Ok(summary)
}
