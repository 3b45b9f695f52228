//! Discrete-time measurements `Y(t_k) = h(X(t_k)) + Sigma W(t_k)`.
//!
//! `Sigma` multiplies a standard-normal vector, so the noise covariance is
//! `Sigma Sigma^T`. It is factorized once when the model is built.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A measurement taken at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub t: f64,
    pub y: Vec<f64>,
}

impl ObservationRecord {
    pub fn new(t: f64, y: Vec<f64>) -> Result<Self> {
        if !t.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage(format!("observation at t = {t} is not finite")));
        }
        Ok(Self { t, y })
    }
}

type MeasureFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
pub struct ObservationModel {
    n: usize,
    m: usize,
    h: Arc<MeasureFn>,
    scale: DMatrix<f64>,
    /// Lower Cholesky factor of `Sigma Sigma^T`, row-major; absent when singular.
    chol: Option<Vec<f64>>,
    log_norm: f64,
}

impl fmt::Debug for ObservationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObservationModel")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("scale", &self.scale)
            .field("has_likelihood", &self.chol.is_some())
            .finish_non_exhaustive()
    }
}

impl ObservationModel {
    /// Model with a Gaussian likelihood. Fails unless `Sigma Sigma^T` is
    /// positive definite.
    pub fn new(n: usize, h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static, scale: DMatrix<f64>) -> Result<Self> {
        let model = Self::generative(n, h, scale)?;
        if model.chol.is_none() {
            return Err(Error::config("observation covariance Sigma Sigma^T is singular"));
        }
        Ok(model)
    }

    /// Model usable for simulation only; `Sigma` may be singular (even zero).
    pub fn generative(
        n: usize,
        h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        scale: DMatrix<f64>,
    ) -> Result<Self> {
        let m = scale.nrows();
        if m == 0 || scale.ncols() != m {
            return Err(Error::config("observation noise scale must be a non-empty square matrix"));
        }
        if scale.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("observation noise scale is not finite"));
        }
        let cov = &scale * scale.transpose();
        let chol = cov.clone().cholesky().and_then(|c| {
            let l = c.l();
            // reject numerically singular factors
            let diag_min = (0..m).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
            let diag_max = (0..m).map(|i| l[(i, i)]).fold(0.0, f64::max);
            (diag_min > 1e-12 * diag_max.max(1e-300)).then_some(l)
        });
        let (chol, log_norm) = match chol {
            Some(l) => {
                let log_det: f64 = (0..m).map(|i| 2.0 * l[(i, i)].ln()).sum();
                let flat = (0..m).flat_map(|r| (0..m).map(move |c| (r, c))).map(|(r, c)| l[(r, c)]).collect();
                (Some(flat), -0.5 * m as f64 * (2.0 * PI).ln() - 0.5 * log_det)
            }
            None => (None, f64::NAN),
        };
        Ok(Self { n, m, h: Arc::new(h), scale, chol, log_norm })
    }

    /// Observes the listed state components (0-based).
    pub fn select(n: usize, components: Vec<usize>, scale: DMatrix<f64>) -> Result<Self> {
        Self::check_selection(n, &components, &scale)?;
        Self::new(n, selector(components), scale)
    }

    pub fn select_generative(n: usize, components: Vec<usize>, scale: DMatrix<f64>) -> Result<Self> {
        Self::check_selection(n, &components, &scale)?;
        Self::generative(n, selector(components), scale)
    }

    fn check_selection(n: usize, components: &[usize], scale: &DMatrix<f64>) -> Result<()> {
        if components.iter().any(|&c| c >= n) {
            return Err(Error::config(format!("observed component out of range for n = {n}")));
        }
        if components.len() != scale.nrows() {
            return Err(Error::config(format!(
                "{} observed components but a {}x{} noise scale",
                components.len(),
                scale.nrows(),
                scale.ncols()
            )));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn obs_dim(&self) -> usize {
        self.m
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    /// Whether [`log_likelihood`](Self::log_likelihood) is defined.
    pub fn has_likelihood(&self) -> bool {
        self.chol.is_some()
    }

    pub fn measure(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        (self.h)(x, &mut out);
        out
    }

    /// `h(x) + Sigma w` with a fresh standard-normal `w`.
    pub fn observe<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let w: Vec<f64> = (0..self.m).map(|_| rng.sample(StandardNormal)).collect();
        self.observe_with(x, &w)
    }

    /// `h(x) + Sigma w` for a caller-supplied noise vector.
    pub fn observe_with(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let mut y = self.measure(x);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += (0..self.m).map(|c| self.scale[(r, c)] * w[c]).sum::<f64>();
        }
        y
    }

    /// `log N(y; h(x), Sigma Sigma^T)`. Returns `NaN` for a generative-only
    /// model (see [`has_likelihood`](Self::has_likelihood)).
    pub fn log_likelihood(&self, y: &[f64], x: &[f64]) -> f64 {
        let Some(l) = &self.chol else {
            return f64::NAN;
        };
        let m = self.m;
        let mut buf = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if m <= buf.len() {
            &mut buf[..m]
        } else {
            heap = vec![0.0; m];
            &mut heap
        };
        (self.h)(x, z);
        // forward substitution L z = y - h(x)
        let mut quad = 0.0;
        for r in 0..m {
            let mut v = y[r] - z[r];
            for c in 0..r {
                v -= l[r * m + c] * z[c];
            }
            v /= l[r * m + r];
            z[r] = v;
            quad += v * v;
        }
        self.log_norm - 0.5 * quad
    }
}

fn selector(components: Vec<usize>) -> impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static {
    move |x: &[f64], out: &mut [f64]| {
        for (o, &c) in out.iter_mut().zip(&components) {
            *o = x[c];
        }
    }
}
