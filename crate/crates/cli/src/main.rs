use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use stochfw::diagnostics::verify_trace;
use stochfw::geometry::{lmo_check, PolytopeSpec};
use stochfw::harness::{
    read_json, run_concentration, run_experiment, ConcentrationConfig, ExperimentConfig, Summary,
    TraceDocument,
};
use stochfw::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "stochfw",
    version,
    about = "Stochastic Frank-Wolfe experiments over polytopes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated experiment and write runs.csv and summary.json.
    Run {
        config: PathBuf,
        /// Override the config's worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check the per-iteration inequalities on a saved trace.
    Verify { trace: PathBuf },
    /// Compare the vertex-scan LMO with the simplex-method LMO.
    LmoCheck {
        polytope: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tabulate empirical gradient-error tails against the bounds.
    Concentration { config: PathBuf },
    /// Print the summary of a finished run directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Config { .. }
            | Error::Json(_)
            | Error::MissingParam(_)
            | Error::EpsGOutOfRange { .. }
            | Error::InvalidNoise(_)
            | Error::NonpositiveEpsilon(_)
            | Error::NonpositiveS(_)
            | Error::NotStronglyConvex(_)
            | Error::DimensionMismatch { .. }
            | Error::UnboundedOrEmpty
            | Error::MalformedTrace(_),
        ) => EXIT_CONFIG,
        _ => 1,
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Run { config, workers } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if workers.is_some() {
                cfg.workers = workers;
                cfg.validate()?;
            }
            let summary = run_experiment(&cfg)?;
            print_summary(&summary);
            println!("wrote {}", cfg.output_dir.display());
            Ok(0)
        }
        Command::Verify { trace } => {
            let doc: TraceDocument = read_json(&trace)?;
            let report = verify_trace(&doc.trace, &doc.constants, doc.kind)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.violations() == 0 {
                0
            } else {
                EXIT_CHECK_FAILED
            })
        }
        Command::LmoCheck {
            polytope,
            trials,
            seed,
        } => {
            let spec: PolytopeSpec = read_json(&polytope)?;
            let p = spec.build()?;
            let check = lmo_check(&p, trials, seed);
            println!("{}", serde_json::to_string_pretty(&check)?);
            Ok(if check.passed() { 0 } else { EXIT_CHECK_FAILED })
        }
        Command::Concentration { config } => {
            let cfg = ConcentrationConfig::load(&config)?;
            let report = run_concentration(&cfg)?;
            println!(
                "{:>8} {:>8} {:>10} {:>10} {:>10} {:>10}",
                "n", "s", "freq", "stderr", "chebyshev", "flag"
            );
            for c in &report.cells {
                println!(
                    "{:>8} {:>8} {:>10.5} {:>10.5} {:>10.5} {:>10}",
                    c.n,
                    c.s,
                    c.frequency,
                    c.std_err,
                    c.chebyshev_bound,
                    if c.violation { "VIOLATION" } else { "" }
                );
            }
            for f in &report.fits {
                println!(
                    "s = {}: log-frequency slope {:.4} per sample, r2 {:.4}, c {:.4}",
                    f.s, f.slope, f.r2, f.c_fit
                );
            }
            Ok(if report.violations == 0 {
                0
            } else {
                EXIT_CHECK_FAILED
            })
        }
        Command::Report { dir } => {
            let path = dir.join("summary.json");
            let summary: Summary =
                read_json(&path).with_context(|| format!("reading {}", path.display()))?;
            print_summary(&summary);
            Ok(0)
        }
    }
}

fn print_summary(s: &Summary) {
    println!(
        "{:>10} {:>6} {:>9} {:>12} {:>12} {:>12} {:>14} {:>8}",
        "epsilon", "runs", "censored", "mean_T", "q90", "bound_T", "n_per_iter", "good"
    );
    for e in &s.per_epsilon {
        println!(
            "{:>10} {:>6} {:>9} {:>12.2} {:>12.1} {:>12.4e} {:>14} {:>8.4}",
            e.epsilon,
            e.runs,
            e.censored,
            e.mean_t,
            e.q90,
            e.bound_mean_t,
            e.n_per_iter,
            e.good_event_rate
        );
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "algorithm {}: slope {} (r2 {}), sample slope {}, bound violations {}",
        s.algorithm.name(),
        fmt(s.slope),
        fmt(s.r2),
        fmt(s.sample_slope),
        s.bound_violations
    );
    for w in &s.warnings {
        println!("warning: {w}");
    }
}
