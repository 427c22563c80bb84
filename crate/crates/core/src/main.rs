use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sacsim::config::{load_config, ConfigError};
use sacsim::experiment::{self, ExperimentError, ResultRow, SweepSpec};

#[derive(Parser)]
#[command(name = "sacsim", version, about = "mmWave WLAN beam-management simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; defaults to the config's `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter sweep.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit_code(e: &ExperimentError) -> ExitCode {
    match e {
        ExperimentError::Config(_) | ExperimentError::Spec { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run_one(config: PathBuf, seed: Option<u64>, out: PathBuf) -> Result<(), ExperimentError> {
    let cfg = load_config(&config)?;
    let seed = seed.unwrap_or(cfg.master_seed);
    let output = experiment::run(&cfg, seed, false)?;
    let row = ResultRow {
        scenario: cfg.scenario.kind.label().into(),
        scheme: cfg.scheme.label(),
        axis: String::new(),
        axis_value: String::new(),
        seed,
        record: output.record,
    };
    let m = experiment::manifest("", &[seed], &[(String::new(), &cfg)]);
    experiment::write_results(&[row], &m, &out)
}

fn run_sweep(spec: PathBuf, out: PathBuf, workers: usize) -> Result<(), ExperimentError> {
    let spec = SweepSpec::load(&spec, std::env::vars())?;
    let points = spec.points()?;
    let outcome = experiment::sweep(&spec, workers)?;
    let cfgs: Vec<(String, &_)> = points
        .iter()
        .map(|p| (p.axis_value.clone(), &p.config))
        .collect();
    let m = experiment::manifest(&spec.axis, &spec.seeds, &cfgs);
    if !outcome.rows.is_empty() {
        experiment::write_results(&outcome.rows, &m, &out)?;
    }
    if !outcome.failures.is_empty() {
        return Err(ExperimentError::Partial {
            total: spec.row_count(),
            failures: outcome.failures,
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { config, seed, out } => run_one(config, seed, out),
        Cmd::Sweep { spec, out, workers } => run_sweep(spec, out, workers),
        Cmd::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!("ok: {} ({})", config.display(), experiment::config_hash(&cfg));
                Ok(())
            }
            Err(e) => Err(ExperimentError::Config(e)),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let ExperimentError::Config(ConfigError::Validation(issues)) = &e {
                for i in issues {
                    eprintln!("error: {i}");
                }
            } else {
                eprintln!("error: {e}");
            }
            exit_code(&e)
        }
    }
}
