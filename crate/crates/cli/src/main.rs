//! `fedfuse`: prepare data, partition, train, evaluate and sweep.
//!
//! Exit codes: 0 on success, 1 when the pipeline fails, 2 for usage and
//! configuration problems. Failures print `error[<category>]: <message>` on
//! stderr.

mod commands;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fedfuse", version, about = "Federated indoor-localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML). Without it, built-in defaults apply.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set federation.sigma=10`. Applied in
    /// order, after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory.
    #[arg(long, short, env = "FEDFUSE_OUT", default_value = "fedfuse-out", global = true)]
    out: PathBuf,

    /// More log output; repeat for more.
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Only log errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter the floor, cluster rooms into areas, write the processed dataset.
    PrepareData,
    /// Split, draw client label mixes and partition for one run.
    Partition(RunArg),
    /// Train every selected strategy for one run and write checkpoints.
    Train(RunArg),
    /// Score checkpoints written by `train`.
    Evaluate(RunArg),
    /// Monte-Carlo runs over the configured sweep (or a single point).
    Sweep,
    /// Target-label probabilities before and after fusion.
    Histograms(RunArg),
}

#[derive(Debug, Args)]
struct RunArg {
    /// Monte-Carlo run index whose seeds are used.
    #[arg(long, default_value_t = 0)]
    run: usize,
}

fn init_logging(common: &Common) {
    let level = if common.quiet {
        log::LevelFilter::Error
    } else {
        match common.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            2 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                eprintln!("error[usage]: invalid command line");
            }
            return ExitCode::from(code as u8);
        }
    };
    init_logging(&cli.common);
    let result = match &cli.command {
        Command::PrepareData => commands::prepare_data(&cli.common),
        Command::Partition(a) => commands::partition(&cli.common, a.run),
        Command::Train(a) => commands::train(&cli.common, a.run),
        Command::Evaluate(a) => commands::evaluate(&cli.common, a.run),
        Command::Sweep => commands::sweep(&cli.common),
        Command::Histograms(a) => commands::histograms(&cli.common, a.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().trim_end());
            ExitCode::from(e.exit_code())
        }
    }
}
