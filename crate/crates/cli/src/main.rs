//! Command-line entry point.  Subcommands mirror the experiment kinds;
//! each reads an optional config file, applies flag overrides, and runs
//! the experiment into an output directory.
//!
//! Exit codes: 0 ok, 2 config error, 3 runtime error, 4 results written
//! but at least one sampling cell failed its equilibration diagnostic.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rotor_lab::config::{emit_canonical, parse_config_with_overrides, ExperimentKind};
use rotor_lab::runner::{planned_artifacts, run};

/// Environment variable holding the default worker-thread count.
const THREADS_ENV: &str = "ROTOR_LAB_THREADS";

#[derive(Parser)]
#[command(name = "rotor-lab", version, about = "Planar-rotor two-layer numerical laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Config file in the documented sectioned key-value format.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; overrides the ROTOR_LAB_THREADS environment variable.
    #[arg(long)]
    threads: Option<usize>,
    /// Validate the config and print the execution plan without running.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the circle heat kernel and its logarithm on a grid.
    KernelTable(RunArgs),
    /// Sweep the single-site potential's maximizers over a time range.
    GroundStateSweep(RunArgs),
    /// Locate the degeneracy window and compare with the closed form.
    Window(RunArgs),
    /// Boundary-conditioned magnetization scan over lattice sizes.
    McScan(RunArgs),
    /// Conditional-density gap of the evolved measure over nested regions.
    Probe(RunArgs),
    /// One-dimensional Monte Carlo vs transfer-matrix cross-check.
    OracleCheck(RunArgs),
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::KernelTable(a) => (ExperimentKind::KernelTable, a),
            Command::GroundStateSweep(a) => (ExperimentKind::GroundStateSweep, a),
            Command::Window(a) => (ExperimentKind::Window, a),
            Command::McScan(a) => (ExperimentKind::McScan, a),
            Command::Probe(a) => (ExperimentKind::Probe, a),
            Command::OracleCheck(a) => (ExperimentKind::OracleCheck, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();

    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("config error: cannot read {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => String::new(),
    };
    let cfg = match parse_config_with_overrides(&text, Some(kind), args.seed) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("config error ({} violation(s)):", errors.len());
            for e in errors {
                eprintln!("  {e}");
            }
            return ExitCode::from(2);
        }
    };

    let threads = args.threads.or_else(|| {
        std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("runtime error: cannot configure {n} worker threads: {e}");
            return ExitCode::from(3);
        }
    }

    if args.dry_run {
        println!("# plan: {kind} -> {}", args.out.display());
        for name in planned_artifacts(kind) {
            println!("# artifact: {name}");
        }
        print!("{}", emit_canonical(&cfg));
        return ExitCode::SUCCESS;
    }

    match run(&cfg, &args.out) {
        Ok(report) => {
            for p in &report.artifacts {
                println!("wrote {}", p.display());
            }
            if report.unequilibrated {
                eprintln!("warning: unequilibrated results present (see CSV flags)");
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(3)
        }
    }
}
