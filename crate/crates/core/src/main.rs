use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qmbdp::config::Config;
use qmbdp::sweep::{execute, execute_plot, RunContext};

#[derive(Parser)]
#[command(
    name = "qmbdp",
    version,
    about = "Stroboscopic detection statistics for an interacting fermion chain"
)]
struct Cli {
    /// INI-like configuration file (dotted keys, [section] headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set ham.delta=2.0 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Directory for CSV/SVG artifacts and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads for sweep points (default: all available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Master seed; drives the initial-state draw and trajectory streams.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Block-coupling gap parameters g_alpha per interaction strength.
    Gaps,
    /// Leading decay rate of the measured step operator per interaction.
    Lambda1,
    /// No-detection series and final survival over an interaction sweep.
    Rn,
    /// Measurement-free observable dynamics per interaction.
    Dynamics,
    /// Monte Carlo detector trajectories and click counts.
    Trajectory,
    /// Single-measurement joint detection probability at a fixed time.
    Singleshot,
    /// Smallest interaction whose final survival exceeds a threshold.
    Transition,
    /// Dump an assembled operator as row/col/value triplets.
    Opdump,
    /// Render a CSV artifact as an SVG line plot.
    Plot {
        /// CSV file produced by one of the other subcommands.
        #[arg(long)]
        input: PathBuf,
        /// Plot kind: rn, series, lambda1, gaps, dynamics, singleshot, transition.
        #[arg(long)]
        kind: String,
        /// Output file name (default: input stem with .svg).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: &Cli) -> qmbdp::Result<()> {
    let mut config = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::empty(),
    };
    for spec in &cli.overrides {
        config.set_override(spec)?;
    }
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(qmbdp::Error::Validation("--threads must be at least 1".into()));
    }
    // sweep points are the unit of parallel work
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    let ctx = RunContext {
        out_dir: cli.out_dir.clone(),
        master_seed: cli.seed,
        threads,
    };
    match &cli.command {
        Command::Gaps => execute("gaps", &config, &ctx),
        Command::Lambda1 => execute("lambda1", &config, &ctx),
        Command::Rn => execute("rn", &config, &ctx),
        Command::Dynamics => execute("dynamics", &config, &ctx),
        Command::Trajectory => execute("trajectory", &config, &ctx),
        Command::Singleshot => execute("singleshot", &config, &ctx),
        Command::Transition => execute("transition", &config, &ctx),
        Command::Opdump => execute("opdump", &config, &ctx),
        Command::Plot { input, kind, out } => {
            execute_plot(input, kind, out.as_deref(), &config, &ctx)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
