//! CSV and JSON files written and read by the CLI.

use std::fs;
use std::path::{Path, PathBuf};

use sdefilter::{ObservationRecord, PosteriorSummary};

use crate::error::{BenchError, Result};

/// Wraps an I/O failure with the offending path.
pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> BenchError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => BenchError::Io { path: path.to_path_buf(), source },
        other => BenchError::data(path, format!("{other:?}")),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes `header` and one row per `(t, values)`; floats in shortest
/// round-trip form.
pub fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a numeric table, checking the header.
pub fn read_table(path: &Path, header: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let found: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if found != header {
        return Err(BenchError::data(path, format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(csv_err(path))?;
            rec.iter()
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| BenchError::data(path, format!("row {}: cannot parse {v:?}: {e}", i + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn columns(first: &str, prefix: &str, n: usize) -> Vec<String> {
    std::iter::once(first.to_string()).chain((1..=n).map(|i| format!("{prefix}{i}"))).collect()
}

pub fn truth_path(dir: &Path) -> PathBuf {
    dir.join("truth.csv")
}

pub fn observations_path(dir: &Path) -> PathBuf {
    dir.join("observations.csv")
}

/// `t,x1..xn`, one row per time.
pub fn write_truth(dir: &Path, times: &[f64], states: &[Vec<f64>]) -> Result<()> {
    let n = states.first().map_or(0, Vec::len);
    let rows = times.iter().zip(states).map(|(t, x)| std::iter::once(*t).chain(x.iter().copied()).collect());
    write_table(&truth_path(dir), &columns("t", "x", n), rows)
}

pub fn read_truth(dir: &Path, n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let rows = read_table(&truth_path(dir), &columns("t", "x", n))?;
    Ok(rows.into_iter().map(|r| (r[0], r[1..].to_vec())).unzip())
}

/// `t,y1..ym`, one row per observation.
pub fn write_observations(dir: &Path, obs: &[ObservationRecord]) -> Result<()> {
    let m = obs.first().map_or(0, |o| o.y.len());
    let rows = obs.iter().map(|o| std::iter::once(o.t).chain(o.y.iter().copied()).collect());
    write_table(&observations_path(dir), &columns("t", "y", m), rows)
}

pub fn read_observations(dir: &Path, m: usize) -> Result<Vec<ObservationRecord>> {
    let path = observations_path(dir);
    read_table(&path, &columns("t", "y", m))?
        .into_iter()
        .map(|r| ObservationRecord::new(r[0], r[1..].to_vec()).map_err(|e| BenchError::data(&path, e.to_string())))
        .collect()
}

pub fn posterior_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "ess".to_string()];
    for prefix in ["x", "theta"] {
        for i in 1..=n {
            h.push(format!("{prefix}{i}_mean"));
            h.push(format!("{prefix}{i}_std"));
        }
    }
    h
}

/// `t,ess,x1_mean,x1_std,...,thetan_mean,thetan_std`, one row per summary.
pub fn write_posterior(path: &Path, n: usize, summaries: &[PosteriorSummary]) -> Result<()> {
    let rows = summaries.iter().map(|s| {
        let mut row = vec![s.t, s.ess];
        for (m, sd) in s.state_mean.iter().zip(&s.state_std).chain(s.param_mean.iter().zip(&s.param_std)) {
            row.push(*m);
            row.push(*sd);
        }
        row
    });
    write_table(path, &posterior_header(n), rows)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| BenchError::data(path, e.to_string()))
}
