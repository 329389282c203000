//! Batch CLI over the check suites: generate instance corpora, run a
//! suite against a seed, and summarize saved reports.
//!
//! Exit codes: 0 on pass, 1 on check failure, 2 on usage or IO errors.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use stratcvx::harness::{
    self, ExperimentConfig, Report, Sizes, Suite,
};

#[derive(Parser)]
#[command(name = "stratcvx", about = "Stratified convex analysis check suites", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic corpus of instance files.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum number of coarse atoms per space.
        #[arg(long, default_value_t = 4)]
        atoms: usize,
        /// Maximum coordinates per atom.
        #[arg(long, default_value_t = 3)]
        dims: usize,
        /// Number of instance files.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Output directory.
        #[arg(long, default_value = "instances")]
        out: PathBuf,
    },
    /// Run a check suite and write its report.
    Check {
        /// One of: duality, separation, gauge, decomposition,
        /// counterexample, risk, all.
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        atoms: usize,
        #[arg(long, default_value_t = 3)]
        dims: usize,
        /// Instances per check (the axiom check scales it by 100).
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Tolerance overrides as name=value, repeatable.
        #[arg(long = "tol", value_parser = parse_tolerance)]
        tolerances: Vec<(String, f64)>,
        /// Report output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a saved report; exits 1 if it recorded failures.
    Report {
        path: PathBuf,
    },
}

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = value.parse().map_err(|e| format!("bad tolerance value {value:?}: {e}"))?;
    Ok((name.to_string(), v))
}

fn print_summary(report: &Report) {
    println!("suite {} (seed {})", report.suite, report.seed);
    for check in &report.checks {
        let failures = check.instances.iter().filter(|i| !i.passed).count();
        println!(
            "  {:<26} {}  instances {:>4}  failures {:>3}  worst gap {:.3e} (tol {:.1e})",
            check.name,
            if check.passed { "PASS" } else { "FAIL" },
            check.instances.len(),
            failures,
            check.worst_gap,
            check.tolerance,
        );
        for inst in check.instances.iter().filter(|i| !i.passed).take(5) {
            println!("      instance {} [{}]: {}", inst.id, inst.kind, inst.detail);
        }
    }
    println!("overall: {}", if report.passed { "PASS" } else { "FAIL" });
}

fn run() -> Result<bool, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen { seed, atoms, dims, count, out } => {
            let sizes = Sizes { max_atoms: atoms, max_dims: dims, count };
            if count < 1 || atoms < 1 || dims < 1 {
                return Err("sizes and count must be at least 1".into());
            }
            let paths = harness::generate_instances(seed, sizes, &out).map_err(|e| e.to_string())?;
            println!("wrote {} instance files under {}", paths.len(), out.display());
            Ok(true)
        }
        Command::Check { suite, seed, atoms, dims, count, tolerances, out } => {
            let config = ExperimentConfig {
                suite,
                seed,
                sizes: Sizes { max_atoms: atoms, max_dims: dims, count },
                tolerances: tolerances.into_iter().collect(),
            };
            config.validate().map_err(|e| e.to_string())?;
            let report = harness::run_suite(&config).map_err(|e| e.to_string())?;
            print_summary(&report);
            if let Some(path) = out {
                harness::save_report(&report, &path).map_err(|e| e.to_string())?;
                println!("report written to {}", path.display());
            }
            Ok(report.passed)
        }
        Command::Report { path } => {
            let report = harness::load_report(&path).map_err(|e| e.to_string())?;
            print_summary(&report);
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
