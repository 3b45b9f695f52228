use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sdefilter::FilterKind;
use sdefilter_bench::experiment::write_simulation;
use sdefilter_bench::{compare_filters, run_experiment, run_oracle, simulate_truth, ExperimentConfig, OracleKind};

#[derive(Parser)]
#[command(name = "sdefilter", version, about = "Joint state and parameter filtering for SDEs")]
struct Cli {
    /// Worker threads for particle propagation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Bpf,
    Rpf,
    Npf,
    Rbpf,
}

impl From<FilterArg> for FilterKind {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Bpf => FilterKind::Bpf,
            FilterArg::Rpf => FilterKind::Rpf,
            FilterArg::Npf => FilterKind::Npf,
            FilterArg::Rbpf => FilterKind::Rbpf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Kalman,
    Gridjoint,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the truth path and observations.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed of the truth and observation noise (overrides truth_seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one filter on recorded observations.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        filter: Option<FilterArg>,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        inner: Option<usize>,
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory holding observations.csv (and optionally truth.csv).
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every filter of a manifest on shared observations.
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact reference posterior for small problems.
    Oracle {
        #[arg(value_enum)]
        kind: OracleArg,
        #[arg(long)]
        config: PathBuf,
        /// Observations to use; simulated with truth_seed when omitted.
        #[arg(long)]
        obs: Option<PathBuf>,
        /// Output directory; the table goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: Option<&PathBuf>) -> sdefilter_bench::Result<ExperimentConfig> {
    match config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn execute(cli: Cli) -> sdefilter_bench::Result<bool> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = load(config.as_ref())?;
            if let Some(s) = seed {
                cfg.truth_seed = s;
            }
            let (truth, obs) = simulate_truth(&cfg, cfg.truth_seed)?;
            write_simulation(&out, &truth, &obs)?;
            eprintln!("wrote {} observations to {}", obs.len(), out.display());
            Ok(true)
        }
        Command::Run { config, filter, particles, inner, jitter, grid, dt, seed, obs, out } => {
            let mut cfg = load(config.as_ref())?;
            if let Some(f) = filter {
                cfg.filter = f.into();
            }
            cfg.particles = particles.unwrap_or(cfg.particles);
            cfg.inner = inner.or(cfg.inner);
            cfg.jitter = jitter.unwrap_or(cfg.jitter);
            cfg.grid = grid.unwrap_or(cfg.grid);
            cfg.dt = dt.unwrap_or(cfg.dt);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let report = run_experiment(&cfg, &obs, &out)?;
            match &report.run.error {
                None => {
                    eprintln!(
                        "{} finished in {:.2}s; artifacts in {}",
                        cfg.filter,
                        report.run.wall_time,
                        out.display()
                    );
                    Ok(true)
                }
                Some(e) => {
                    eprintln!("error: {} failed: {e}", cfg.filter);
                    Ok(false)
                }
            }
        }
        Command::Compare { manifest, out } => {
            let rows = compare_filters(&manifest, &out)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            eprintln!("{} runs, {failed} failed; table in {}", rows.len(), out.join("comparison.csv").display());
            Ok(failed == 0)
        }
        Command::Oracle { kind, config, obs, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let kind = match kind {
                OracleArg::Kalman => OracleKind::Kalman,
                OracleArg::Gridjoint => OracleKind::GridJoint,
            };
            let result = run_oracle(kind, &cfg, obs.as_deref())?;
            match out {
                Some(dir) => {
                    let name = if kind == OracleKind::Kalman { "kalman" } else { "gridjoint" };
                    result.write(&dir, name)?;
                }
                None => print!("{}", result.to_csv_string()),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
