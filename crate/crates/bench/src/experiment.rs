//! Synthetic truth, single filter runs and their artifacts.

use std::path::Path;
use std::time::Instant;

use sdefilter::{
    simulate_interval, ObservationRecord, ParticleFilter, PosteriorSummary, Purpose, Result as CoreResult, Streams,
};
use serde_json::{json, Value};

use crate::artifacts;
use crate::config::ExperimentConfig;
use crate::error::Result;

/// Truth path sampled at `t = 0` and every observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// One Euler-Maruyama path from `x0` under `true_theta`, observed on the
/// schedule. Each observation interval draws from its own stream of `seed`.
pub fn simulate_truth(cfg: &ExperimentConfig, seed: u64) -> CoreResult<(Truth, Vec<ObservationRecord>)> {
    cfg.validate()?;
    let model = cfg.model()?;
    let om = cfg.generative_observation_model()?;
    let streams = Streams::new(seed);
    let mut truth = Truth { times: vec![0.0], states: vec![cfg.x0.clone()] };
    let mut obs = Vec::new();
    let mut t = 0.0;
    for (k, &t1) in cfg.schedule()?.iter().enumerate() {
        let step = k as u64 + 1;
        let x = truth.states.last().expect("truth starts at x0");
        let mut rng = streams.rng(Purpose::Truth, step, 0);
        let seg = simulate_interval(&model, x, &cfg.true_theta, t, t1, cfg.dt, &mut rng)?;
        let x1 = seg.last().to_vec();
        let mut rng = streams.rng(Purpose::Observe, step, 0);
        obs.push(ObservationRecord::new(t1, om.observe(&x1, &mut rng))?);
        truth.times.push(t1);
        truth.states.push(x1);
        t = t1;
    }
    Ok((truth, obs))
}

/// Writes `truth.csv` and `observations.csv` into `out`.
pub fn write_simulation(out: &Path, truth: &Truth, obs: &[ObservationRecord]) -> Result<()> {
    artifacts::ensure_dir(out)?;
    artifacts::write_truth(out, &truth.times, &truth.states)?;
    artifacts::write_observations(out, obs)
}

/// Filter output, possibly cut short by a failure.
#[derive(Debug, Clone)]
pub struct FilterRun {
    /// Prior summary at `t = 0`, then one per assimilated observation.
    pub summaries: Vec<PosteriorSummary>,
    pub error: Option<sdefilter::Error>,
    pub wall_time: f64,
}

impl FilterRun {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    pub fn last(&self) -> &PosteriorSummary {
        self.summaries.last().expect("a run holds at least the prior summary")
    }
}

/// Runs the configured filter over `obs`, keeping every summary produced
/// before a failure.
pub fn run_filter_on(cfg: &ExperimentConfig, obs: &[ObservationRecord]) -> CoreResult<FilterRun> {
    let start = Instant::now();
    let mut filter = ParticleFilter::new(cfg.problem()?, cfg.filter_config())?;
    let mut summaries = vec![filter.initial_summary().clone()];
    let mut error = None;
    for (index, y) in obs.iter().enumerate() {
        match filter.assimilate(y) {
            Ok(s) => summaries.push(s),
            Err(e) => {
                error = Some(sdefilter::Error::Step { index, source: Box::new(e) });
                break;
            }
        }
    }
    Ok(FilterRun { summaries, error, wall_time: start.elapsed().as_secs_f64() })
}

/// Root mean square error of the posterior mean per state component, over
/// summaries at `t >= from` that have a truth row at the same time.
pub fn state_rmse(summaries: &[PosteriorSummary], truth: &Truth, from: f64) -> Option<Vec<f64>> {
    let n = truth.states.first()?.len();
    let mut sq = vec![0.0; n];
    let mut count = 0usize;
    for s in summaries.iter().filter(|s| s.t >= from - 1e-9) {
        let Some(k) = truth.times.iter().position(|t| (t - s.t).abs() <= 1e-9 * s.t.abs().max(1.0)) else {
            continue;
        };
        for ((acc, m), x) in sq.iter_mut().zip(&s.state_mean).zip(&truth.states[k]) {
            *acc += (m - x).powi(2);
        }
        count += 1;
    }
    (count > 0).then(|| sq.iter().map(|v| (v / count as f64).sqrt()).collect())
}

/// `|mean - truth|` per parameter and whether `mean +- std` covers the truth.
pub fn param_errors(s: &PosteriorSummary, truth: &[f64]) -> (Vec<f64>, Vec<bool>) {
    s.param_mean.iter().zip(&s.param_std).zip(truth).map(|((m, sd), t)| ((m - t).abs(), (m - t).abs() <= *sd)).unzip()
}

/// Contents of `summary.json`: final estimates, diagnostics and the resolved
/// config. Deterministic given config and observations.
pub fn summary_json(cfg: &ExperimentConfig, run: &FilterRun, observations: usize, truth: Option<&Truth>) -> Value {
    let last = run.last();
    let (abs_err, covers) = param_errors(last, &cfg.true_theta);
    let rmse = truth.and_then(|tr| state_rmse(&run.summaries, tr, cfg.rmse_from));
    json!({
        "status": if run.succeeded() { "ok" } else { "failed" },
        "error": run.error.as_ref().map(|e| e.to_string()),
        "filter": cfg.filter.as_str(),
        "observations": observations,
        "assimilated": run.summaries.len() - 1,
        "final": {
            "t": last.t,
            "ess": last.ess,
            "state_mean": last.state_mean,
            "state_std": last.state_std,
            "param_mean": last.param_mean,
            "param_std": last.param_std,
            "distinct_theta": last.distinct_theta,
        },
        "true_theta": cfg.true_theta,
        "param_abs_error": abs_err,
        "param_ci_covers_truth": covers,
        "all_ci_cover_truth": covers.iter().all(|c| *c),
        "state_rmse": rmse,
        "rmse_from": cfg.rmse_from,
        "config": serde_json::to_value(cfg).expect("configs serialize"),
    })
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub run: FilterRun,
    pub summary: Value,
}

/// Reads `observations.csv` (and `truth.csv` if present) from `obs_dir`,
/// runs the filter and writes `posterior.csv`, `summary.json` and
/// `timing.json` into `out`. A filter failure is recorded in the artifacts
/// and reported through [`FilterRun::error`], not as `Err`.
pub fn run_experiment(cfg: &ExperimentConfig, obs_dir: &Path, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let obs = artifacts::read_observations(obs_dir, cfg.obs_components.len())?;
    let truth = if artifacts::truth_path(obs_dir).exists() {
        let (times, states) = artifacts::read_truth(obs_dir, cfg.dim())?;
        Some(Truth { times, states })
    } else {
        None
    };
    let run = run_filter_on(cfg, &obs)?;
    artifacts::ensure_dir(out)?;
    artifacts::write_posterior(&out.join("posterior.csv"), cfg.dim(), &run.summaries)?;
    let summary = summary_json(cfg, &run, obs.len(), truth.as_ref());
    artifacts::write_json(&out.join("summary.json"), &summary)?;
    artifacts::write_json(&out.join("timing.json"), &json!({ "wall_time_s": run.wall_time }))?;
    Ok(RunReport { run, summary })
}
