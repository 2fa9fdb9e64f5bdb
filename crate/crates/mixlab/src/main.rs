//! `mixlab`: exact and Monte Carlo analysis of lazy walks, coverage
//! processes, and lamplighter chains on vertex-transitive graphs.
//!
//! Every subcommand reads one scenario JSON (see `experiments::Scenario`),
//! writes a manifest plus CSV/JSON artifacts into the output directory, and
//! exits 0 on success, 2 on precondition failures, 3 on capacity errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mixlab::experiments::{run, Mode, Scenario};

#[derive(Parser)]
#[command(name = "mixlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: MIXLAB_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact spectral/mixing/hitting/Green report for a graph.
    Exact(CommonArgs),
    /// Monte Carlo coverage simulation.
    Simulate(CommonArgs),
    /// Lamp-and-walker chain: exact, MC, or identity mode.
    Lamplighter(CommonArgs),
    /// Closed-form bound evaluation over parameter rows.
    Bounds(CommonArgs),
    /// Feasibility constants for a graph.
    CheckAssumptions(CommonArgs),
    /// Mixing-estimate scaling study over a graph family.
    ScalingStudy(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Exact(a)
            | Command::Simulate(a)
            | Command::Lamplighter(a)
            | Command::Bounds(a)
            | Command::CheckAssumptions(a)
            | Command::ScalingStudy(a) => a,
        }
    }

    fn mode(&self) -> Mode {
        match self {
            Command::Exact(_) => Mode::Exact,
            Command::Simulate(_) => Mode::Simulate,
            Command::Lamplighter(_) => Mode::Lamplighter,
            Command::Bounds(_) => Mode::Bounds,
            Command::CheckAssumptions(_) => Mode::CheckAssumptions,
            Command::ScalingStudy(_) => Mode::ScalingStudy,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = cli.command.common();

    let threads = args.threads.or_else(|| {
        std::env::var("MIXLAB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(threads) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("mixlab: could not configure {threads} threads: {e}");
            return ExitCode::from(1);
        }
    }

    let mut scenario = match Scenario::from_file(&args.config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("mixlab: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if scenario.mode != cli.command.mode() {
        eprintln!(
            "mixlab: scenario mode `{}` does not match subcommand `{}`",
            scenario.mode.as_str(),
            cli.command.mode().as_str()
        );
        return ExitCode::from(2);
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(out) = &args.out {
        scenario.out_dir = Some(out.clone());
    }

    match run(&scenario) {
        Ok(artifacts) => {
            for f in &artifacts.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mixlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
