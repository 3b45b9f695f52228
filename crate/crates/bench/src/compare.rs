//! Several filter runs on one shared observation record.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::artifacts::{self, io_err};
use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};
use crate::experiment::{param_errors, run_experiment};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

/// One `[[run]]` table; unset keys come from the manifest's config. A list
/// of jitter values expands into one run per value.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSpec {
    filter: String,
    particles: Option<usize>,
    inner: Option<usize>,
    jitter: Option<OneOrMany>,
    grid: Option<usize>,
    dt: Option<f64>,
    seed: Option<u64>,
    obs: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    config: Option<PathBuf>,
    obs: Option<PathBuf>,
    #[serde(rename = "run")]
    runs: Vec<RunSpec>,
}

/// One line of `comparison.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub filter: String,
    pub particles: usize,
    pub inner: Option<usize>,
    pub jitter: f64,
    pub grid: usize,
    pub status: String,
    pub param_mean: Vec<f64>,
    pub param_std: Vec<f64>,
    pub param_abs_error: Vec<f64>,
    pub all_ci_cover_truth: bool,
    pub wall_time: f64,
}

/// Runs every manifest entry on the shared observations, writes each run's
/// artifacts under `out/runs/<label>/` and the table to `out/comparison.csv`.
pub fn compare_filters(manifest_path: &Path, out: &Path) -> Result<Vec<ComparisonRow>> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| BenchError::data(manifest_path, format!("invalid manifest: {e}")))?;
    if manifest.runs.is_empty() {
        return Err(BenchError::data(manifest_path, "manifest lists no [[run]] entries"));
    }
    let base_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
    let base = match &manifest.config {
        Some(p) => ExperimentConfig::load(&resolve(p))?,
        None => ExperimentConfig::default(),
    };

    let mut plan = Vec::new();
    for entry in &manifest.runs {
        let obs = entry
            .obs
            .as_ref()
            .or(manifest.obs.as_ref())
            .map(|p| resolve(p))
            .ok_or_else(|| BenchError::data(manifest_path, "no observation directory given (obs)"))?;
        let jitters = match &entry.jitter {
            None => vec![base.jitter],
            Some(OneOrMany::One(c)) => vec![*c],
            Some(OneOrMany::Many(cs)) => cs.clone(),
        };
        for c in jitters {
            let mut cfg = base.clone();
            cfg.filter = entry.filter.parse()?;
            cfg.particles = entry.particles.unwrap_or(cfg.particles);
            cfg.inner = entry.inner.or(cfg.inner);
            cfg.jitter = c;
            cfg.grid = entry.grid.unwrap_or(cfg.grid);
            cfg.dt = entry.dt.unwrap_or(cfg.dt);
            cfg.seed = entry.seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            plan.push((cfg, obs.clone()));
        }
    }

    let m = base.obs_components.len();
    let reference = artifacts::read_observations(&plan[0].1, m)?;
    for (_, dir) in &plan[1..] {
        if artifacts::read_observations(dir, m)? != reference {
            return Err(sdefilter::Error::Config(format!(
                "observations in {} differ from those in {}",
                dir.display(),
                plan[0].1.display()
            ))
            .into());
        }
    }

    artifacts::ensure_dir(out)?;
    let mut rows = Vec::with_capacity(plan.len());
    for (i, (cfg, obs_dir)) in plan.iter().enumerate() {
        let label = format!("{:02}-{}-n{}-c{}", i + 1, cfg.filter, cfg.particles, cfg.jitter);
        let report = run_experiment(cfg, obs_dir, &out.join("runs").join(&label))?;
        let last = report.run.last();
        let (abs_err, covers) = param_errors(last, &cfg.true_theta);
        rows.push(ComparisonRow {
            label,
            filter: cfg.filter.to_string(),
            particles: cfg.particles,
            inner: (cfg.filter == sdefilter::FilterKind::Npf).then(|| cfg.filter_config().inner_particles()),
            jitter: cfg.jitter,
            grid: cfg.grid,
            status: if report.run.succeeded() { "ok".into() } else { "failed".into() },
            param_mean: last.param_mean.clone(),
            param_std: last.param_std.clone(),
            param_abs_error: abs_err,
            all_ci_cover_truth: covers.iter().all(|c| *c),
            wall_time: report.run.wall_time,
        });
    }
    write_comparison(&out.join("comparison.csv"), base.dim(), &rows)?;
    Ok(rows)
}

fn write_comparison(path: &Path, n: usize, rows: &[ComparisonRow]) -> Result<()> {
    let csv_err = |e: csv::Error| BenchError::data(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> =
        ["run", "filter", "particles", "inner", "jitter", "grid", "status"].map(String::from).to_vec();
    for i in 1..=n {
        header.extend([format!("theta{i}_mean"), format!("theta{i}_std"), format!("theta{i}_abs_err")]);
    }
    header.extend(["all_ci_cover_truth".to_string(), "wall_time_s".to_string()]);
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.label.clone(),
            r.filter.clone(),
            r.particles.to_string(),
            r.inner.map_or(String::new(), |m| m.to_string()),
            r.jitter.to_string(),
            r.grid.to_string(),
            r.status.clone(),
        ];
        for i in 0..n {
            rec.extend([r.param_mean[i].to_string(), r.param_std[i].to_string(), r.param_abs_error[i].to_string()]);
        }
        rec.extend([r.all_ci_cover_truth.to_string(), r.wall_time.to_string()]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}
