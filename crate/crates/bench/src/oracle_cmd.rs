//! Oracle runs driven by an experiment config.

use std::path::Path;

use sdefilter::oracle::{grid_joint_filter, kalman_filter, JointGridPosterior, JointGridPrior, LinearGaussianModel};
use sdefilter::{Error, GridAxis, Interval, ObservationRecord};

use crate::artifacts;
use crate::config::{ExperimentConfig, ModelId, PriorShape};
use crate::error::Result;
use crate::experiment::simulate_truth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Kalman,
    GridJoint,
}

/// Observations from `obs_dir`, or simulated with `truth_seed` when absent.
fn observations(cfg: &ExperimentConfig, obs_dir: Option<&Path>) -> Result<Vec<ObservationRecord>> {
    match obs_dir {
        Some(dir) => artifacts::read_observations(dir, cfg.obs_components.len()),
        None => Ok(simulate_truth(cfg, cfg.truth_seed)?.1),
    }
}

/// Posterior moments from an oracle at every observation time. The Kalman
/// oracle takes `theta` as known (`true_theta`).
pub fn run_oracle(kind: OracleKind, cfg: &ExperimentConfig, obs_dir: Option<&Path>) -> Result<OracleOutput> {
    cfg.validate()?;
    let obs = observations(cfg, obs_dir)?;
    match kind {
        OracleKind::Kalman => {
            if cfg.model != ModelId::Ou || cfg.state_prior != PriorShape::Gaussian {
                return Err(
                    Error::Config("the Kalman oracle needs model = \"ou\" with a gaussian state prior".into()).into()
                );
            }
            let lg = LinearGaussianModel::scalar_ou(
                cfg.true_theta[0],
                cfg.sigma[0],
                cfg.obs_noise[0],
                cfg.state_mean[0],
                cfg.state_std[0].powi(2),
            );
            let rows =
                kalman_filter(&lg, &obs)?.iter().map(|e| vec![e.t, e.mean[0], e.cov[(0, 0)].max(0.0).sqrt()]).collect();
            let header = ["t", "x1_mean", "x1_std"].map(String::from).to_vec();
            Ok(OracleOutput { header, rows, joint: None })
        }
        OracleKind::GridJoint => {
            if cfg.dim() != 1 {
                return Err(Error::Config("the joint grid oracle needs a one-dimensional model".into()).into());
            }
            let support = cfg.param_support()?[0];
            let theta =
                if support.is_point() { GridAxis::point(support.lo) } else { GridAxis::uniform(support, cfg.grid)? };
            let x = GridAxis::uniform(Interval::new(cfg.oracle_x_lo, cfg.oracle_x_hi)?, cfg.oracle_x_nodes)?;
            let prior = JointGridPrior::from_state_prior(theta, x, &cfg.state_prior()?)?;
            let posts = grid_joint_filter(&cfg.model()?, &prior, &cfg.observation_model()?, &obs, cfg.dt)?;
            let rows = posts
                .iter()
                .map(|p| {
                    let (xm, xv) = p.x_moments();
                    let (tm, tv) = p.theta_moments();
                    vec![p.t, xm, xv.sqrt(), tm, tv.sqrt()]
                })
                .collect();
            let header = ["t", "x1_mean", "x1_std", "theta1_mean", "theta1_std"].map(String::from).to_vec();
            Ok(OracleOutput { header, rows, joint: posts.last().cloned() })
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleOutput {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Final joint table (grid oracle only).
    pub joint: Option<JointGridPosterior>,
}

impl OracleOutput {
    /// `<name>.csv` with the moment rows and, for the grid oracle,
    /// `joint.csv` with `theta,x,p` for the final table.
    pub fn write(&self, out: &Path, name: &str) -> Result<()> {
        artifacts::ensure_dir(out)?;
        artifacts::write_table(&out.join(format!("{name}.csv")), &self.header, self.rows.iter().cloned())?;
        if let Some(j) = &self.joint {
            let rows = j
                .theta_nodes
                .iter()
                .enumerate()
                .flat_map(|(g, th)| j.x_nodes.iter().enumerate().map(move |(b, x)| vec![*th, *x, j.prob(g, b)]));
            let header = ["theta", "x", "p"].map(String::from).to_vec();
            artifacts::write_table(&out.join("joint.csv"), &header, rows)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}
