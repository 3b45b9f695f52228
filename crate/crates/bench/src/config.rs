//! Experiment configuration: a flat TOML key-value file laid over the preset
//! of the chosen model.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use sdefilter::{
    Error, FilterConfig, FilterKind, Interval, ObservationModel, Problem, ResamplingScheme, Result, SdeModel,
    StatePrior,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::io_err;
use crate::error::BenchError;
use crate::models;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Lorenz63,
    Ou,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorShape {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    Systematic,
    Multinomial,
}

/// Every setting of one experiment. Unset keys take the preset of `model`
/// (the Lorenz-63 twin experiment by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelId,
    /// Custom model only: one drift expression per component in `theta`, `x1..xn`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<String>,
    pub sigma: Vec<f64>,
    pub param_lo: Vec<f64>,
    pub param_hi: Vec<f64>,
    pub state_prior: PriorShape,
    /// Uniform prior box, or Gaussian mean and std, depending on `state_prior`.
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub true_theta: Vec<f64>,
    pub x0: Vec<f64>,
    /// Observed state components, 1-based.
    pub obs_components: Vec<usize>,
    /// Standard deviation of each observation noise component.
    pub obs_noise: Vec<f64>,
    pub obs_start: f64,
    pub obs_step: f64,
    pub obs_end: f64,
    #[serde(with = "filter_kind")]
    pub filter: FilterKind,
    pub particles: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<usize>,
    pub jitter: f64,
    pub grid: usize,
    pub dt: f64,
    pub resampling: Resampling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess_threshold: Option<f64>,
    /// Seed of the filter.
    pub seed: u64,
    /// Seed of the synthetic truth and observations.
    pub truth_seed: u64,
    /// State RMSE in summary.json covers observation times `t >= rmse_from`.
    pub rmse_from: f64,
    /// State axis of the joint grid oracle.
    pub oracle_x_lo: f64,
    pub oracle_x_hi: f64,
    pub oracle_x_nodes: usize,
}

mod filter_kind {
    use sdefilter::FilterKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &FilterKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(k.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FilterKind, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(ModelId::Lorenz63)
    }
}

impl ExperimentConfig {
    pub fn preset(model: ModelId) -> Self {
        let lorenz = Self {
            model: ModelId::Lorenz63,
            drift: Vec::new(),
            sigma: vec![1.0; 3],
            param_lo: models::lorenz63_param_support().iter().map(|iv| iv.lo).collect(),
            param_hi: models::lorenz63_param_support().iter().map(|iv| iv.hi).collect(),
            state_prior: PriorShape::Uniform,
            state_lo: models::lorenz63_state_support().iter().map(|iv| iv.lo).collect(),
            state_hi: models::lorenz63_state_support().iter().map(|iv| iv.hi).collect(),
            state_mean: vec![-6.0, -6.0, 24.0],
            state_std: vec![1.0; 3],
            true_theta: models::LORENZ63_TRUE_THETA.to_vec(),
            x0: models::LORENZ63_X0.to_vec(),
            obs_components: vec![1, 3],
            obs_noise: vec![1.0, 1.0],
            obs_start: 0.05,
            obs_step: 0.05,
            obs_end: 10.0,
            filter: FilterKind::Rbpf,
            particles: 2000,
            inner: None,
            jitter: 0.0,
            grid: 100,
            dt: 1e-3,
            resampling: Resampling::Systematic,
            ess_threshold: None,
            seed: 0,
            truth_seed: 0,
            rmse_from: 1.0,
            oracle_x_lo: -5.0,
            oracle_x_hi: 5.0,
            oracle_x_nodes: 200,
        };
        match model {
            ModelId::Lorenz63 => lorenz,
            ModelId::Ou | ModelId::Custom => Self {
                model,
                sigma: vec![1.0],
                param_lo: vec![0.2],
                param_hi: vec![3.0],
                state_prior: PriorShape::Gaussian,
                state_lo: vec![-2.0],
                state_hi: vec![2.0],
                state_mean: vec![0.0],
                state_std: vec![1.0],
                true_theta: vec![1.0],
                x0: vec![0.3],
                obs_components: vec![1],
                obs_noise: vec![0.5],
                obs_start: 0.2,
                obs_step: 0.2,
                obs_end: 1.0,
                dt: 0.01,
                grid: 200,
                rmse_from: 0.0,
                ..lorenz
            },
        }
    }

    /// Parses TOML text: keys override the preset named by `model`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        let model = match user.get("model") {
            None => ModelId::Lorenz63,
            Some(v) => v.clone().try_into().map_err(|e| Error::Config(format!("invalid model: {e}")))?,
        };
        let mut table = toml::Table::try_from(Self::preset(model)).expect("presets serialize");
        table.extend(user);
        let cfg: Self = table.try_into().map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> crate::error::Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text).map_err(|e| BenchError::data(path, e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let bad = |msg: String| Err(Error::Config(msg));
        let lens = [
            ("param_lo", self.param_lo.len()),
            ("param_hi", self.param_hi.len()),
            ("true_theta", self.true_theta.len()),
            ("x0", self.x0.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return bad(format!("{name} has {len} entries for a {n}-dimensional model"));
            }
        }
        let prior_lens = match self.state_prior {
            PriorShape::Uniform => [("state_lo", self.state_lo.len()), ("state_hi", self.state_hi.len())],
            PriorShape::Gaussian => [("state_mean", self.state_mean.len()), ("state_std", self.state_std.len())],
        };
        for (name, len) in prior_lens {
            if len != n {
                return bad(format!("{name} has {len} entries for a {n}-dimensional model"));
            }
        }
        if self.model == ModelId::Lorenz63 && n != 3 {
            return bad("the lorenz63 model is three-dimensional".into());
        }
        if self.model == ModelId::Ou && n != 1 {
            return bad("the ou model is one-dimensional".into());
        }
        if self.model == ModelId::Custom && self.drift.len() != n {
            return bad(format!("custom model needs {n} drift expressions, got {}", self.drift.len()));
        }
        if self.obs_components.is_empty() || self.obs_components.iter().any(|&c| c == 0 || c > n) {
            return bad(format!("obs_components must be 1-based indices in 1..={n}"));
        }
        if self.obs_noise.len() != self.obs_components.len() {
            return bad("obs_noise needs one entry per observed component".into());
        }
        if self.obs_noise.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("obs_noise entries must be finite and >= 0".into());
        }
        self.schedule()?;
        if self.particles == 0 {
            return bad("particles must be at least 1".into());
        }
        if self.inner == Some(0) {
            return bad("inner must be at least 1".into());
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad(format!("jitter {} must be >= 0", self.jitter));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt {} must be > 0", self.dt));
        }
        if !(self.oracle_x_hi > self.oracle_x_lo) || self.oracle_x_nodes < 2 {
            return bad("oracle state axis needs oracle_x_hi > oracle_x_lo and at least 2 nodes".into());
        }
        self.model()?;
        Ok(())
    }

    /// Observation times `obs_start, obs_start + obs_step, ..., obs_end`.
    pub fn schedule(&self) -> Result<Vec<f64>> {
        let (a, h, b) = (self.obs_start, self.obs_step, self.obs_end);
        if !(a > 0.0 && h > 0.0 && b >= a && b.is_finite()) {
            return Err(Error::Config(format!(
                "observation schedule needs 0 < obs_start <= obs_end and obs_step > 0 (got {a}, {h}, {b})"
            )));
        }
        let span = (b - a) / h;
        let k = span.round();
        if (span - k).abs() > 1e-6 {
            return Err(Error::Config(format!("obs_end - obs_start = {} is not a multiple of obs_step = {h}", b - a)));
        }
        Ok((0..=k as usize).map(|i| if i == k as usize { b } else { a + i as f64 * h }).collect())
    }

    pub fn param_support(&self) -> Result<Vec<Interval>> {
        self.param_lo.iter().zip(&self.param_hi).map(|(&lo, &hi)| Interval::new(lo, hi)).collect()
    }

    pub fn model(&self) -> Result<SdeModel> {
        let support = self.param_support()?;
        match self.model {
            ModelId::Lorenz63 => models::lorenz63_model().with_sigma(self.sigma.clone())?.with_param_support(support),
            ModelId::Ou => models::ou_model(self.sigma[0], support[0]),
            ModelId::Custom => models::custom_model(&self.drift, self.sigma.clone(), support),
        }
    }

    fn obs_scale(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.obs_noise))
    }

    fn obs_indices(&self) -> Vec<usize> {
        self.obs_components.iter().map(|c| c - 1).collect()
    }

    /// Observation model for filtering; needs every noise std > 0.
    pub fn observation_model(&self) -> Result<ObservationModel> {
        ObservationModel::select(self.dim(), self.obs_indices(), self.obs_scale())
    }

    /// Observation model for generating data; any noise std >= 0.
    pub fn generative_observation_model(&self) -> Result<ObservationModel> {
        ObservationModel::select_generative(self.dim(), self.obs_indices(), self.obs_scale())
    }

    pub fn state_prior(&self) -> Result<StatePrior> {
        Ok(match self.state_prior {
            PriorShape::Uniform => StatePrior::Uniform(
                self.state_lo
                    .iter()
                    .zip(&self.state_hi)
                    .map(|(&lo, &hi)| Interval::new(lo, hi))
                    .collect::<Result<_>>()?,
            ),
            PriorShape::Gaussian => StatePrior::Gaussian { mean: self.state_mean.clone(), std: self.state_std.clone() },
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::new(self.model()?, self.observation_model()?, self.state_prior()?)
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            kind: self.filter,
            particles: self.particles,
            inner: self.inner,
            jitter: self.jitter,
            grid: self.grid,
            dt: self.dt,
            resampling: match self.resampling {
                Resampling::Systematic => ResamplingScheme::Systematic,
                Resampling::Multinomial => ResamplingScheme::Multinomial,
            },
            ess_threshold: self.ess_threshold,
            seed: self.seed,
        }
    }
}
