//! `pislab`: command line front end for the experiments.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a single
//! fit fails or does not converge, 1 for anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pislab_core::bounds::TheoremInputs;
use pislab_core::harness::presets::{self, *};
use pislab_core::harness::{rate_slope, run_sweep, write_csv, ExperimentConfig, ModeKind};
use pislab_core::PislabError;

#[derive(Parser)]
#[command(name = "pislab", version, about = "Physics-informed least squares experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// JSON configuration; every field has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel dimensions of the truncated operator.
    Kernel(Io),
    /// One fit; writes the result as JSON.
    Fit(Io),
    /// Fit sweep over modes, sample sizes, weights and seeds.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the config's `output` field.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo complexity parameters.
    Complexity(Io),
    /// Small-ball constants.
    Smallball(Io),
    /// Hypothesis checks and bound values for given constants.
    Certify {
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collocation penalty deviation against the number of points.
    PenaltyMc(Io),
    /// Soft, hard and plain fits of a heat polynomial.
    E1(Io),
    /// Soft over hard median error ratio.
    E2(Io),
    /// Kernel dimension against the ambient dimension.
    E3(Io),
    /// Collocation penalty convergence.
    E4(Io),
    /// r_Q of the constrained set against the full ball.
    E5(Io),
}

enum Failure {
    Config(String),
    Solver(String),
    Other(String),
}

impl From<PislabError> for Failure {
    fn from(e: PislabError) -> Self {
        match e {
            PislabError::Config(_) | PislabError::Json(_) | PislabError::DimensionMismatch { .. } | PislabError::Empty(_) => {
                Failure::Config(e.to_string())
            }
            PislabError::Solver(_) | PislabError::Infeasible { .. } => Failure::Solver(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

fn load<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, Failure> {
    if let Some(p) = path {
        if !p.exists() {
            return Err(Failure::Config(format!("config file {} not found", p.display())));
        }
    }
    Ok(presets::load_config(path.as_deref())?)
}

fn load_experiment(path: &Option<PathBuf>, default: ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    let config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => default,
    };
    config.validate()?;
    Ok(config)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(PislabError::from)?;
    std::fs::write(path, text + "\n").map_err(PislabError::from)?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn sweep_and_report(config: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let report = run_e1(config)?;
    write_csv(out, &report.sweep.rows)?;
    write_csv(&sibling(out, "summary"), &report.summary)?;
    for s in &report.summary {
        println!("{:<13} lambda={:<8} n={:<6} median_error={:.6e}", s.mode.name(), s.lambda, s.n, s.median_error);
    }
    for mode in [ModeKind::Plain, ModeKind::Hard] {
        if let Ok(slope) = rate_slope(&report.sweep.rows, mode, None) {
            println!("rate slope {}: {slope:.4}", mode.name());
        }
    }
    let violations = report.sweep.violations().count();
    println!("minimiser inequality: {} checked, {violations} violated", report.sweep.minimiser.len());
    if !report.sweep.failures.is_empty() {
        println!("{} cells failed", report.sweep.failures.len());
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Kernel(io) | Command::E3(io) => {
            let config: KernelConfig = load(&io.config)?;
            let rows = kernel_dimensions(&config)?;
            for r in &rows {
                println!("p={} kernel_dim={} ambient_dim={}", r.p, r.kernel_dim, r.ambient_dim);
            }
            write_csv(&io.out, &rows)?;
        }
        Command::Fit(io) => {
            let job: FitJob = load(&io.config)?;
            let report = run_fit(&job)?;
            write_json(&io.out, &report)?;
            if !report.result.converged {
                return Err(Failure::Solver(format!("{} fit did not converge (gap {:.3e})", report.result.mode, report.result.gap)));
            }
        }
        Command::Sweep { config, out } => {
            let config = load_experiment(&config, ExperimentConfig::default())?;
            let out = out
                .or_else(|| config.output.clone())
                .ok_or_else(|| Failure::Config("no output path: pass --out or set `output`".into()))?;
            let sweep = run_sweep(&config)?;
            write_csv(&out, &sweep.rows)?;
            println!("{} rows, {} failed cells, {} minimiser violations", sweep.rows.len(), sweep.failures.len(), sweep.violations().count());
        }
        Command::Complexity(io) => {
            let config: ComplexityConfig = load(&io.config)?;
            write_csv(&io.out, &run_complexity(&config)?)?;
        }
        Command::E5(io) => {
            let config: ComplexityConfig = match &io.config {
                Some(_) => load(&io.config)?,
                None => e5_config(),
            };
            let rows = run_complexity(&config)?;
            for r in &rows {
                println!("{:?} {:<11} n={:<5} estimate={:.4e}{}", r.quantity, r.set, r.n, r.estimate, if r.censored_flag { " (censored)" } else { "" });
            }
            write_csv(&io.out, &rows)?;
        }
        Command::Smallball(io) => {
            let config: SmallBallConfig = load(&io.config)?;
            write_csv(&io.out, &run_smallball(&config)?)?;
        }
        Command::Certify { inputs, out } => {
            let text = std::fs::read_to_string(&inputs).map_err(|e| Failure::Config(format!("{}: {e}", inputs.display())))?;
            let inputs: TheoremInputs = serde_json::from_str(&text).map_err(PislabError::from)?;
            write_json(&out, &run_certify(&inputs)?)?;
        }
        Command::PenaltyMc(io) | Command::E4(io) => {
            let config: PenaltyMcConfig = load(&io.config)?;
            let report = run_penalty_mc(&config)?;
            write_csv(&io.out, &report.rows)?;
            if let Some(s) = report.slope {
                println!("deviation slope in m: {s:.4}");
            }
        }
        Command::E1(io) => {
            let config = load_experiment(&io.config, e1_config())?;
            sweep_and_report(&config, &io.out)?;
        }
        Command::E2(io) => {
            let config = load_experiment(&io.config, e2_config())?;
            let sweep = run_sweep(&config)?;
            let report = e2_ratios(&sweep.rows)?;
            write_csv(&io.out, &report.ratios)?;
            println!("best lambda {} with max over n of soft/hard median error ratio {:.4}", report.best_lambda, report.max_ratio);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
