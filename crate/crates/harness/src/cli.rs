//! Command-line front end. Exit codes: 0 success, 1 validation error
//! (bad config, bad input files, failed verification), 2 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{load_config, ExperimentConfig, ExperimentKind, OracleKind};
use crate::error::{HarnessError, Result};
use crate::experiment::{baseline_run, execute};
use crate::io::write_metrics;
use crate::plot::{emit_plot, PlotKind};
use crate::verify::verify_trace;

#[derive(Debug, Parser)]
#[command(name = "sparsepush", version, about = "Sparsified push-sum consensus and decentralized optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed (and the seed list).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Average consensus with sparsified messages.
    Consensus(RunArgs),
    /// Decentralized gradient descent on the configured oracle.
    Optimize(RunArgs),
    /// The configured quantized baselines at the matched bit budget.
    Baseline(RunArgs),
    /// Measured sigma against compression over `k_list` and `seeds`.
    Spectral(RunArgs),
    /// The sweep or comparison named by `experiment`.
    Sweep(RunArgs),
    /// Draw stored CSVs as an SVG chart.
    Plot {
        #[arg(long, value_parser = clap::value_parser!(PlotKind))]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
    /// Re-check the convergence bounds on a stored trace.
    Verify {
        #[arg(long)]
        trace: PathBuf,
    },
}

impl clap::builder::ValueParserFactory for PlotKind {
    type Parser = clap::builder::ValueParser;
    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<PlotKind>())
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Consensus(args) => {
            let cfg = ExperimentConfig { experiment: ExperimentKind::Consensus, ..load(&args)? };
            report(execute(&cfg)?)
        }
        Command::Optimize(args) => {
            let cfg = load(&args)?;
            let experiment = match cfg.oracle {
                OracleKind::Zero => return Err(HarnessError::Validation("optimize needs `oracle` other than zero".into())),
                OracleKind::Logistic => ExperimentKind::Logistic,
                _ => ExperimentKind::Linreg,
            };
            report(execute(&ExperimentConfig { experiment, ..cfg })?)
        }
        Command::Baseline(args) => {
            let cfg = load(&args)?;
            for &kind in &cfg.baselines {
                let (m, side) = baseline_run(&cfg, cfg.n, kind)?;
                let path = cfg.out.join(format!("{}-{}.csv", cfg.name, kind.name(cfg.oracle != OracleKind::Zero)));
                write_metrics(&m, &path, &side)?;
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Spectral(args) => {
            let cfg = ExperimentConfig { experiment: ExperimentKind::SpectralSweep, ..load(&args)? };
            report(execute(&cfg)?)
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            match cfg.experiment {
                ExperimentKind::SpectralSweep | ExperimentKind::EpsilonSweep | ExperimentKind::SizeSweep | ExperimentKind::BaselineCompare => {
                    report(execute(&cfg)?)
                }
                other => Err(HarnessError::Validation(format!("`sweep` needs a sweep experiment, config has `{}`", other.tag()))),
            }
        }
        Command::Plot { kind, out, csv } => {
            emit_plot(&csv, kind, &out)?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Verify { trace } => {
            let checks = verify_trace(&trace)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed == 0 {
                Ok(())
            } else {
                Err(HarnessError::CheckFailed(format!("{failed} of {} checks failed", checks.len())))
            }
        }
    }
}

fn report(outcome: crate::experiment::Outcome) -> Result<()> {
    for f in &outcome.files {
        println!("{}", f.display());
    }
    if !outcome.summary.is_empty() {
        print!("{}", outcome.summary);
        if !outcome.summary.ends_with('\n') {
            println!();
        }
    }
    Ok(())
}

/// Parse `argv`, run, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
