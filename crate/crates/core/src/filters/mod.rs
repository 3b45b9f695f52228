//! The four sequential filters behind one driver:
//!
//! * [`FilterKind::Bpf`]: bootstrap filter over `(theta, x)` particles.
//! * [`FilterKind::Rpf`]: bootstrap filter whose parameter particles are
//!   jittered with truncated `N(0, c I)` noise after each resampling.
//! * [`FilterKind::Npf`]: nested filter, an outer regularized filter over
//!   `theta` with an inner bootstrap filter of `M` states per outer particle.
//! * [`FilterKind::Rbpf`]: Rao-Blackwellized filter, state particles each
//!   carrying grid marginals of the parameters.
//!
//! Propagation runs on the rayon pool; every particle draws from its own
//! counter-addressed stream, so output does not depend on the thread count.

mod bpf;
mod npf;
mod rbpf;
mod summary;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

pub use bpf::{bpf_step, rpf_step, BpfEnsemble, BpfParticle};
pub use npf::{npf_step, NpfEnsemble, NpfParticle};
pub use rbpf::{rbpf_step, RbpfEnsemble, RbpfParticle};
pub use summary::PosteriorSummary;

use crate::error::{Error, Result};
use crate::observation::{ObservationModel, ObservationRecord};
use crate::resampling::{ess, normalize_at, ResamplingScheme};
use crate::rng::{Purpose, Streams};
use crate::sde::{step_widths, Interval, SdeModel};

/// Give up on truncated jitter after this many rejected draws for one particle.
pub const MAX_JITTER_TRIES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Bpf,
    Rpf,
    Npf,
    Rbpf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [FilterKind::Bpf, FilterKind::Rpf, FilterKind::Npf, FilterKind::Rbpf];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Bpf => "bpf",
            FilterKind::Rpf => "rpf",
            FilterKind::Npf => "npf",
            FilterKind::Rbpf => "rbpf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpf" => Ok(FilterKind::Bpf),
            "rpf" => Ok(FilterKind::Rpf),
            "npf" => Ok(FilterKind::Npf),
            "rbpf" | "rb-pf" => Ok(FilterKind::Rbpf),
            other => Err(Error::config(format!("unknown filter kind '{other}'"))),
        }
    }
}

/// Law of the initial state `X(0)`, independent across components.
#[derive(Debug, Clone, PartialEq)]
pub enum StatePrior {
    Uniform(Vec<Interval>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl StatePrior {
    pub fn dim(&self) -> usize {
        match self {
            StatePrior::Uniform(b) => b.len(),
            StatePrior::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            StatePrior::Uniform(b) => b.iter().map(|iv| iv.sample_uniform(rng)).collect(),
            StatePrior::Gaussian { mean, std } => {
                mean.iter().zip(std).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            StatePrior::Uniform(_) => Ok(()),
            StatePrior::Gaussian { mean, std } => {
                if mean.len() != std.len() || std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    Err(Error::config("Gaussian state prior needs one finite std >= 0 per mean"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Model, measurement model and priors: everything a filter is run against.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: SdeModel,
    pub observation: ObservationModel,
    pub state_prior: StatePrior,
}

impl Problem {
    pub fn new(model: SdeModel, observation: ObservationModel, state_prior: StatePrior) -> Result<Self> {
        let n = model.dim();
        if observation.state_dim() != n || state_prior.dim() != n {
            return Err(Error::config(format!(
                "dimension mismatch: model {n}, observation {}, state prior {}",
                observation.state_dim(),
                state_prior.dim()
            )));
        }
        state_prior.validate()?;
        Ok(Self { model, observation, state_prior })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub kind: FilterKind,
    /// `N`: particles (outer particles for the NPF).
    pub particles: usize,
    /// `M`: inner state particles per outer NPF particle; `None` means `M = N`.
    pub inner: Option<usize>,
    /// `c`: variance of the parameter jitter (RPF, NPF).
    pub jitter: f64,
    /// `G`: grid nodes per parameter (RB-PF).
    pub grid: usize,
    /// Euler-Maruyama inner step.
    pub dt: f64,
    pub resampling: ResamplingScheme,
    /// Resample only when `ESS < threshold * N`. `None` resamples every step.
    pub ess_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            kind: FilterKind::Rbpf,
            particles: 2000,
            inner: None,
            jitter: 0.0,
            grid: 100,
            dt: 1e-3,
            resampling: ResamplingScheme::Systematic,
            ess_threshold: None,
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn new(kind: FilterKind, particles: usize) -> Self {
        Self { kind, particles, ..Self::default() }
    }

    pub fn inner_particles(&self) -> usize {
        self.inner.unwrap_or(self.particles)
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::config("particle count must be at least 1"));
        }
        if self.kind == FilterKind::Npf && self.inner_particles() == 0 {
            return Err(Error::config("inner particle count must be at least 1"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::config(format!("jitter variance {} must be >= 0", self.jitter)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("inner step {} must be > 0", self.dt)));
        }
        if let Some(th) = self.ess_threshold {
            if !(0.0..=1.0).contains(&th) {
                return Err(Error::config(format!("ESS threshold {th} must lie in [0, 1]")));
            }
        }
        if !problem.observation.has_likelihood() {
            return Err(Error::config("filtering needs a non-singular observation covariance"));
        }
        if self.kind == FilterKind::Rbpf {
            if self.grid < 2 {
                return Err(Error::config("RB-PF grids need at least 2 nodes"));
            }
            let model = &problem.model;
            for (i, (iv, s)) in model.param_support().iter().zip(model.sigma()).enumerate() {
                if !iv.is_point() && !(*s > 0.0) {
                    return Err(Error::config(format!("RB-PF needs sigma_{i} > 0 to marginalize theta_{i}")));
                }
            }
        }
        Ok(())
    }

    fn should_resample(&self, ess: f64, n: usize) -> bool {
        self.ess_threshold.is_none_or(|th| ess < th * n as f64)
    }
}

/// Everything one assimilation step needs besides the ensemble.
pub struct StepContext<'a> {
    pub problem: &'a Problem,
    pub config: &'a FilterConfig,
    pub streams: Streams,
    /// 1-based index of the observation being assimilated.
    pub step: u64,
    pub t0: f64,
    pub t1: f64,
    /// Inner step widths covering `[t0, t1]`.
    pub widths: Vec<f64>,
}

impl<'a> StepContext<'a> {
    pub fn new(problem: &'a Problem, config: &'a FilterConfig, step: u64, t0: f64, t1: f64) -> Result<Self> {
        let widths = step_widths(t0, t1, config.dt)?;
        Ok(Self { problem, config, streams: Streams::new(config.seed), step, t0, t1, widths })
    }
}

/// Normalized weights plus the resampling decision for one step.
struct Reweighted {
    weights: Vec<f64>,
    ess: f64,
    ancestors: Option<Vec<usize>>,
}

fn reweight(log_weights: &[f64], ctx: &StepContext) -> Result<Reweighted> {
    let weights = normalize_at(log_weights, ctx.t1)?;
    let ess = ess(&weights);
    let ancestors = ctx.config.should_resample(ess, weights.len()).then(|| {
        let mut rng = ctx.streams.rng(Purpose::Resample, ctx.step, 0);
        ctx.config.resampling.resample(&weights, &mut rng)
    });
    Ok(Reweighted { weights, ess, ancestors })
}

/// Adds `N(0, c I)` noise to `theta` until it lands in the support box.
/// Components with a point support are left alone.
pub fn jitter_theta<R: Rng + ?Sized>(theta: &mut [f64], support: &[Interval], c: f64, rng: &mut R) -> Result<()> {
    if c == 0.0 {
        return Ok(());
    }
    let sd = c.sqrt();
    let mut proposal = theta.to_vec();
    for _ in 0..MAX_JITTER_TRIES {
        for ((p, t), iv) in proposal.iter_mut().zip(theta.iter()).zip(support) {
            *p = if iv.is_point() { *t } else { t + sd * rng.sample::<f64, _>(StandardNormal) };
        }
        if proposal.iter().zip(support).all(|(p, iv)| iv.contains(*p)) {
            theta.copy_from_slice(&proposal);
            return Ok(());
        }
    }
    Err(Error::config(format!(
        "jitter variance {c} too large for the parameter box: no admissible draw in {MAX_JITTER_TRIES} tries"
    )))
}

/// Current particle population of any filter kind.
#[derive(Debug, Clone)]
pub enum Ensemble {
    Bpf(BpfEnsemble),
    Npf(NpfEnsemble),
    Rbpf(RbpfEnsemble),
}

/// A filter ready to assimilate observations one at a time.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    problem: Problem,
    config: FilterConfig,
    ensemble: Ensemble,
    t: f64,
    step: u64,
    initial: PosteriorSummary,
}

impl ParticleFilter {
    /// Samples the initial ensemble from the priors at `t = 0`.
    pub fn new(problem: Problem, config: FilterConfig) -> Result<Self> {
        config.validate(&problem)?;
        let streams = Streams::new(config.seed);
        let (ensemble, initial) = match config.kind {
            FilterKind::Bpf | FilterKind::Rpf => {
                let e = BpfEnsemble::from_prior(&problem, config.particles, &streams);
                let s = e.summary();
                (Ensemble::Bpf(e), s)
            }
            FilterKind::Npf => {
                let e = NpfEnsemble::from_prior(&problem, config.particles, config.inner_particles(), &streams);
                let s = e.summary();
                (Ensemble::Npf(e), s)
            }
            FilterKind::Rbpf => {
                let e = RbpfEnsemble::from_prior(&problem, config.particles, config.grid, &streams)?;
                let s = e.summary();
                (Ensemble::Rbpf(e), s)
            }
        };
        Ok(Self { problem, config, ensemble, t: 0.0, step: 0, initial })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Summary of the prior ensemble at `t = 0`.
    pub fn initial_summary(&self) -> &PosteriorSummary {
        &self.initial
    }

    /// Predicts to `obs.t` and corrects with `obs.y`.
    pub fn assimilate(&mut self, obs: &ObservationRecord) -> Result<PosteriorSummary> {
        if !(obs.t > self.t) {
            return Err(Error::usage(format!("observation time {} does not follow current time {}", obs.t, self.t)));
        }
        if obs.y.len() != self.problem.observation.obs_dim() {
            return Err(Error::usage(format!(
                "observation has {} components, expected {}",
                obs.y.len(),
                self.problem.observation.obs_dim()
            )));
        }
        let ctx = StepContext::new(&self.problem, &self.config, self.step + 1, self.t, obs.t)?;
        let summary = match (&mut self.ensemble, self.config.kind) {
            (Ensemble::Bpf(e), FilterKind::Bpf) => bpf_step(e, obs, &ctx)?,
            (Ensemble::Bpf(e), FilterKind::Rpf) => rpf_step(e, obs, &ctx)?,
            (Ensemble::Npf(e), _) => npf_step(e, obs, &ctx)?,
            (Ensemble::Rbpf(e), _) => rbpf_step(e, obs, &ctx)?,
            _ => unreachable!("ensemble type always matches the filter kind"),
        };
        self.t = obs.t;
        self.step += 1;
        Ok(summary)
    }
}

/// Runs a filter over time-sorted observations. The first summary is the
/// prior at `t = 0`, followed by one per observation.
pub fn run_filter(
    problem: &Problem,
    config: &FilterConfig,
    observations: &[ObservationRecord],
) -> Result<Vec<PosteriorSummary>> {
    let mut filter = ParticleFilter::new(problem.clone(), config.clone())?;
    let mut out = Vec::with_capacity(observations.len() + 1);
    out.push(filter.initial_summary().clone());
    for (index, obs) in observations.iter().enumerate() {
        let s = filter.assimilate(obs).map_err(|e| Error::Step { index, source: Box::new(e) })?;
        out.push(s);
    }
    Ok(out)
}

/// Tags a per-particle failure with the particle index.
fn particle_err(particle: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Particle { particle, source: Box::new(e) }
}
