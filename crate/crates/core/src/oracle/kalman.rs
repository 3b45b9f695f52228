use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::observation::ObservationRecord;

/// `dX = A X dt + S dB`, observed as `y = H x + R w`, with a Gaussian prior
/// on `X(0)`. Transitions between observation times are discretized exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    pub drift: DMatrix<f64>,
    pub diffusion: DMatrix<f64>,
    pub obs_matrix: DMatrix<f64>,
    pub obs_scale: DMatrix<f64>,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanEstimate {
    pub t: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl LinearGaussianModel {
    /// Scalar Ornstein-Uhlenbeck process `dX = -theta X dt + sigma dB`
    /// observed directly with noise standard deviation `obs_sd`.
    pub fn scalar_ou(theta: f64, sigma: f64, obs_sd: f64, prior_mean: f64, prior_var: f64) -> Self {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        Self {
            drift: s(-theta),
            diffusion: s(sigma),
            obs_matrix: s(1.0),
            obs_scale: s(obs_sd),
            prior_mean: DVector::from_element(1, prior_mean),
            prior_cov: s(prior_var),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.drift.nrows()
    }

    fn validate(&self) -> Result<()> {
        let n = self.drift.nrows();
        let m = self.obs_matrix.nrows();
        let ok = self.drift.is_square()
            && self.diffusion.nrows() == n
            && self.obs_matrix.ncols() == n
            && self.obs_scale.shape() == (m, m)
            && self.prior_mean.len() == n
            && self.prior_cov.shape() == (n, n);
        if !ok {
            return Err(Error::config("inconsistent linear-Gaussian model dimensions"));
        }
        check_psd(&self.prior_cov, "prior covariance")
    }

    /// Exact transition `(F, Q)` over `delta`: `F = e^{A delta}` and
    /// `Q = int_0^delta e^{A s} S S^T e^{A^T s} ds`, via Van Loan's block
    /// exponential.
    pub fn discretize(&self, delta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.state_dim();
        let qc = &self.diffusion * self.diffusion.transpose();
        let mut block = DMatrix::zeros(2 * n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&(-&self.drift * delta));
        block.view_mut((0, n), (n, n)).copy_from(&(qc * delta));
        block.view_mut((n, n), (n, n)).copy_from(&(self.drift.transpose() * delta));
        let e = block.exp();
        let f = e.view((n, n), (n, n)).transpose();
        let q = &f * e.view((0, n), (n, n));
        let q = 0.5 * (&q + q.transpose());
        (f, q)
    }

    /// Propagates `(mean, cov)` forward by `delta` without an observation.
    pub fn predict(&self, mean: &DVector<f64>, cov: &DMatrix<f64>, delta: f64) -> (DVector<f64>, DMatrix<f64>) {
        let (f, q) = self.discretize(delta);
        let mean = &f * mean;
        let cov = &f * cov * f.transpose() + q;
        let cov = 0.5 * (&cov + cov.transpose());
        (mean, cov)
    }
}

fn check_psd(cov: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = cov.abs().max().max(1e-300);
    if (cov - cov.transpose()).abs().max() > 1e-9 * scale {
        return Err(Error::Numerical(format!("{what} is not symmetric")));
    }
    let min_eig = cov.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-9 * scale || !min_eig.is_finite() {
        return Err(Error::Numerical(format!("{what} is not positive semidefinite (min eigenvalue {min_eig})")));
    }
    Ok(())
}

/// Exact conditional means and covariances at each observation time.
pub fn kalman_filter(model: &LinearGaussianModel, observations: &[ObservationRecord]) -> Result<Vec<KalmanEstimate>> {
    model.validate()?;
    let h = &model.obs_matrix;
    let r = &model.obs_scale * model.obs_scale.transpose();
    let n = model.state_dim();
    let mut mean = model.prior_mean.clone();
    let mut cov = model.prior_cov.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(observations.len());
    for obs in observations {
        if !(obs.t > t) {
            return Err(Error::usage("observations must be strictly increasing in time after t = 0"));
        }
        (mean, cov) = model.predict(&mean, &cov, obs.t - t);
        let y = DVector::from_column_slice(&obs.y);
        let s = h * &cov * h.transpose() + &r;
        let s_inv = s.try_inverse().ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
        let gain = &cov * h.transpose() * s_inv;
        mean = &mean + &gain * (y - h * &mean);
        // Joseph form keeps the update symmetric PSD
        let a = DMatrix::identity(n, n) - &gain * h;
        cov = &a * &cov * a.transpose() + &gain * &r * gain.transpose();
        cov = 0.5 * (&cov + cov.transpose());
        check_psd(&cov, "posterior covariance")?;
        t = obs.t;
        out.push(KalmanEstimate { t, mean: mean.clone(), cov: cov.clone() });
    }
    Ok(out)
}
