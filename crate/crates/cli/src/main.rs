use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eqd_core::experiment::{self, ExperimentConfig, RunManifest, Task};
use eqd_core::{DynMap, EqdError};

#[derive(Parser)]
#[command(name = "eqd", version, about = "Equilibrium-measure experiments for rational and monomial maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task listed in the config.
    Run(RunArgs),
    /// Print the degree report of a map spec as JSON.
    Degrees {
        /// e.g. "rational1d: num=[1,0,0] den=[0,0,1]"
        mapspec: String,
    },
    /// Sample the equilibrium measure only.
    Sample(RunArgs),
    /// Sample, then compute correlation series.
    Correlate(RunArgs),
    /// Sample, then run the Birkhoff-sum CLT experiment.
    Clt(RunArgs),
    /// Transfer-operator decomposition traces.
    Transfer(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_HYPOTHESIS: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(e: &EqdError) -> u8 {
    match e {
        EqdError::HypothesisViolated { .. } => EXIT_HYPOTHESIS,
        e if e.is_numerical() && !matches!(e, EqdError::Io(_)) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn report(manifest: &RunManifest, out: &Path, verbose: bool) {
    for t in &manifest.tasks {
        match &t.error {
            Some(e) => eprintln!("{:<10} {} ({e})", t.task, t.status),
            None => eprintln!("{:<10} {} {:.2}s", t.task, t.status, t.wall_time_s),
        }
        if verbose {
            for a in &t.artifacts {
                eprintln!("    {} {}", a.sha256, a.path);
            }
        }
    }
    eprintln!("manifest: {}", out.join("manifest.json").display());
}

fn run(args: RunArgs, only: Option<Task>) -> Result<(), (u8, String)> {
    let config = ExperimentConfig::load(&args.config)
        .map_err(|e| (EXIT_CONFIG, format!("{}: {e}", args.config.display())))?;
    let config = match only {
        Some(t) => config.restricted_to(t).map_err(|e| (EXIT_CONFIG, e.to_string()))?,
        None => config,
    };
    let out = args
        .out
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("eqd-out"));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        pool = pool.num_threads(w.max(1));
    }
    let pool = pool.build().map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    let manifest = pool.install(|| experiment::run(&config, &out)).map_err(|e| {
        let msg = match &e {
            EqdError::HypothesisViolated { margin } => {
                format!("hypothesis violated: margin {margin} (need > 1); see {}", out.display())
            }
            e => e.to_string(),
        };
        (exit_code(&e), msg)
    })?;
    report(&manifest, &out, args.verbose);
    if manifest.failed().is_some() {
        return Err((EXIT_NUMERICAL, "one or more tasks failed".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Degrees { mapspec } => mapspec
            .parse::<DynMap>()
            .map(|m| println!("{:#}", experiment::degree_json(&m)))
            .map_err(|e| (EXIT_CONFIG, e.to_string())),
        Command::Run(a) => run(a, None),
        Command::Sample(a) => run(a, Some(Task::Sample)),
        Command::Correlate(a) => run(a, Some(Task::Correlate)),
        Command::Clt(a) => run(a, Some(Task::Clt)),
        Command::Transfer(a) => run(a, Some(Task::Transfer)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
