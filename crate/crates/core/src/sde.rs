//! Parameterized SDE models with additive noise,
//!
//! ```text
//! dX_i(t) = f_i(theta_i, X(t)) dt + sigma_i dB_i(t),   i = 1..n
//! ```
//!
//! and their Euler-Maruyama simulation. Paths keep every inner state so the
//! parameter-grid update can integrate along them.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`. `lo == hi` encodes a known (fixed) value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::config(format!("interval [{lo}, {hi}] is not finite")));
        }
        if lo > hi {
            return Err(Error::config(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(value: f64) -> Self {
        Self { lo: value, hi: value }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_point() {
            self.lo
        } else {
            self.lo + self.width() * rng.random::<f64>()
        }
    }
}

/// The drift family `f_i(theta_i, x)`. Implementations must be pure.
pub trait Drift: Send + Sync {
    fn eval(&self, i: usize, theta: f64, x: &[f64]) -> f64;

    /// `f_i` at every value of `thetas` for one state `x`.
    ///
    /// Overrides must return exactly what `eval` returns for each node.
    fn eval_nodes(&self, i: usize, thetas: &[f64], x: &[f64], out: &mut [f64]) {
        for (o, &th) in out.iter_mut().zip(thetas) {
            *o = self.eval(i, th, x);
        }
    }
}

impl<F> Drift for F
where
    F: Fn(usize, f64, &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, i: usize, theta: f64, x: &[f64]) -> f64 {
        self(i, theta, x)
    }
}

#[derive(Clone)]
pub struct SdeModel {
    drift: Arc<dyn Drift>,
    sigma: Vec<f64>,
    param_support: Vec<Interval>,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("dim", &self.dim())
            .field("sigma", &self.sigma)
            .field("param_support", &self.param_support)
            .finish_non_exhaustive()
    }
}

impl SdeModel {
    /// `sigma` and `param_support` both have one entry per state dimension.
    ///
    /// A zero `sigma_i` is accepted for simulation; filters that need the
    /// parameter likelihood of dimension `i` reject it.
    pub fn new(drift: impl Drift + 'static, sigma: Vec<f64>, param_support: Vec<Interval>) -> Result<Self> {
        Self::from_arc(Arc::new(drift), sigma, param_support)
    }

    pub fn from_arc(drift: Arc<dyn Drift>, sigma: Vec<f64>, param_support: Vec<Interval>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::config("state dimension must be at least 1"));
        }
        if param_support.len() != sigma.len() {
            return Err(Error::config(format!(
                "{} parameter intervals for a {}-dimensional model",
                param_support.len(),
                sigma.len()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::config(format!("noise intensity {s} must be finite and >= 0")));
        }
        for iv in &param_support {
            Interval::new(iv.lo, iv.hi)?;
        }
        Ok(Self { drift, sigma, param_support })
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn param_support(&self) -> &[Interval] {
        &self.param_support
    }

    pub fn drift(&self) -> &dyn Drift {
        self.drift.as_ref()
    }

    /// Same drift, different noise intensities.
    pub fn with_sigma(&self, sigma: Vec<f64>) -> Result<Self> {
        Self::from_arc(self.drift.clone(), sigma, self.param_support.clone())
    }

    pub fn with_param_support(&self, param_support: Vec<Interval>) -> Result<Self> {
        Self::from_arc(self.drift.clone(), self.sigma.clone(), param_support)
    }

    pub fn param_in_support(&self, theta: &[f64]) -> bool {
        theta.iter().zip(&self.param_support).all(|(t, iv)| iv.contains(*t))
    }

    /// `f_i(theta_i, x)` with 0-based `i`.
    pub fn drift_eval(&self, i: usize, theta_i: f64, x: &[f64]) -> Result<f64> {
        if i >= self.dim() {
            return Err(Error::usage(format!(
                "dimension index {i} out of range for a {}-dimensional model",
                self.dim()
            )));
        }
        if x.len() != self.dim() {
            return Err(Error::usage(format!("state has length {}, expected {}", x.len(), self.dim())));
        }
        let v = self.drift.eval(i, theta_i, x);
        if !v.is_finite() {
            return Err(Error::NonFiniteDrift { dim: i });
        }
        Ok(v)
    }

    /// One Euler-Maruyama step, `x'_i = x_i + f_i dt + sigma_i sqrt(dt) gauss_i`.
    pub fn em_step(&self, x: &[f64], theta: &[f64], dt: f64, gauss: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if x.len() != n || theta.len() != n || gauss.len() != n {
            return Err(Error::usage(format!("em_step expects vectors of length {n}")));
        }
        if !(dt > 0.0) {
            return Err(Error::usage(format!("step size {dt} must be positive")));
        }
        let mut out = vec![0.0; n];
        self.em_step_into(x, theta, dt, dt.sqrt(), gauss, &mut out)?;
        Ok(out)
    }

    #[inline]
    fn em_step_into(
        &self,
        x: &[f64],
        theta: &[f64],
        dt: f64,
        sqrt_dt: f64,
        gauss: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        for i in 0..x.len() {
            let v = x[i] + self.drift.eval(i, theta[i], x) * dt + self.sigma[i] * sqrt_dt * gauss[i];
            if !v.is_finite() {
                return Err(Error::Divergence { dim: i, dt, time: None });
            }
            out[i] = v;
        }
        Ok(())
    }

    /// Advances `x` in place over the given inner steps without recording the
    /// path. Consumes the random stream exactly like [`simulate_interval`].
    pub fn propagate<R: Rng + ?Sized>(
        &self,
        x: &mut [f64],
        theta: &[f64],
        t0: f64,
        widths: &[f64],
        rng: &mut R,
    ) -> Result<()> {
        let n = self.dim();
        let mut gauss = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut t = t0;
        for &h in widths {
            for g in gauss.iter_mut() {
                *g = rng.sample(StandardNormal);
            }
            self.em_step_into(x, theta, h, h.sqrt(), &gauss, &mut next).map_err(|e| with_time(e, t + h))?;
            x.copy_from_slice(&next);
            t += h;
        }
        Ok(())
    }
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::Divergence { dim, dt, .. } => Error::Divergence { dim, dt, time: Some(t) },
        other => other,
    }
}

/// Inner step widths covering `[t0, t1]` with nominal step `dt`: as many full
/// steps as fit, plus one shorter final step so `t1` is hit exactly.
pub fn step_widths(t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t1 > t0) {
        return Err(Error::usage(format!("interval end {t1} must exceed start {t0}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::usage(format!("step size {dt} must be positive")));
    }
    let span = t1 - t0;
    let full = (span / dt + 1e-9).floor();
    let rem = span - full * dt;
    let mut widths = vec![dt; full as usize];
    if rem > 1e-9 * dt {
        widths.push(rem);
    }
    if widths.is_empty() {
        widths.push(span);
    }
    Ok(widths)
}

/// A simulated path over `[t0, t1]` on an inner grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    dim: usize,
    t0: f64,
    t1: f64,
    /// `steps.len() + 1` states, row-major.
    states: Vec<f64>,
    steps: Vec<f64>,
}

impl PathSegment {
    pub fn new(dim: usize, t0: f64, t1: f64, states: Vec<f64>, steps: Vec<f64>) -> Result<Self> {
        if dim == 0 || steps.is_empty() || states.len() != dim * (steps.len() + 1) {
            return Err(Error::usage("path needs at least two states of the model dimension"));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("path contains non-finite states"));
        }
        if steps.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::usage("path step widths must be positive"));
        }
        Ok(Self { dim, t0, t1, states, steps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    /// Number of stored states (steps + 1).
    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn step_widths(&self) -> &[f64] {
        &self.steps
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.state(0)
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.steps.len())
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    /// Increment of component `i` over inner step `k`.
    pub fn increment(&self, k: usize, i: usize) -> f64 {
        self.states[(k + 1) * self.dim + i] - self.states[k * self.dim + i]
    }

    /// Joins `self` on `[t0, t1]` with `next` on `[t1, t2]`.
    pub fn concat(&self, next: &PathSegment) -> Result<PathSegment> {
        if self.dim != next.dim || self.t1 != next.t0 || self.last() != next.first() {
            return Err(Error::usage("segments do not join"));
        }
        let mut states = self.states.clone();
        states.extend_from_slice(&next.states[next.dim..]);
        let mut steps = self.steps.clone();
        steps.extend_from_slice(&next.steps);
        Ok(PathSegment { dim: self.dim, t0: self.t0, t1: next.t1, states, steps })
    }
}

/// Euler-Maruyama path from `x0` over `[t0, t1]` with fixed parameters.
pub fn simulate_interval<R: Rng + ?Sized>(
    model: &SdeModel,
    x0: &[f64],
    theta: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    rng: &mut R,
) -> Result<PathSegment> {
    let n = model.dim();
    if x0.len() != n || theta.len() != n {
        return Err(Error::usage(format!("expected state and parameter vectors of length {n}")));
    }
    let widths = step_widths(t0, t1, dt)?;
    simulate_steps(model, x0, theta, t0, t1, widths, rng)
}

pub(crate) fn simulate_steps<R: Rng + ?Sized>(
    model: &SdeModel,
    x0: &[f64],
    theta: &[f64],
    t0: f64,
    t1: f64,
    widths: Vec<f64>,
    rng: &mut R,
) -> Result<PathSegment> {
    let n = model.dim();
    let mut states = Vec::with_capacity(n * (widths.len() + 1));
    states.extend_from_slice(x0);
    let mut gauss = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut t = t0;
    for (k, &h) in widths.iter().enumerate() {
        for g in gauss.iter_mut() {
            *g = rng.sample(StandardNormal);
        }
        model
            .em_step_into(&states[k * n..(k + 1) * n], theta, h, h.sqrt(), &gauss, &mut next)
            .map_err(|e| with_time(e, t + h))?;
        states.extend_from_slice(&next);
        t += h;
    }
    Ok(PathSegment { dim: n, t0, t1, states, steps: widths })
}
