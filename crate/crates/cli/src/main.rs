//! `cybertom` command-line front end.

mod commands;
mod config;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad flags, ids or configuration values. Exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "cybertom", version, about = "Network transport metrics and cyber-defence theory-of-mind datasets")]
struct Cli {
    /// Directory receiving all outputs.
    #[arg(long, short = 'o', global = true, env = "CYBERTOM_OUTPUT_DIR", default_value = ".")]
    output_dir: PathBuf,

    /// Worker threads (defaults to all cores).
    #[arg(long, short = 'j', global = true, env = "CYBERTOM_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a network topology and write it as JSON.
    Network(commands::NetworkArgs),
    /// Play episodes between one Blue and one Red agent.
    Simulate(commands::SimulateArgs),
    /// Play every Blue against every Red on several networks.
    Tournament(ConfigArgs<commands::TournamentOverrides>),
    /// Build a theory-of-mind dataset.
    Dataset(ConfigArgs<commands::DatasetOverrides>),
    /// Score a predictions file against a dataset manifest.
    Score(commands::ScoreArgs),
    /// Transport distances between two node distributions.
    #[command(subcommand)]
    Ntd(commands::NtdCommand),
}

#[derive(Debug, Args)]
struct ConfigArgs<T: Args> {
    /// TOML configuration file.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: T,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cli.output_dir)?;
    let out = cli.output_dir.as_path();
    match cli.command {
        Command::Network(args) => commands::network(&args, out),
        Command::Simulate(args) => commands::simulate(&args, out),
        Command::Tournament(args) => commands::tournament(args.config.as_deref(), &args.overrides, out),
        Command::Dataset(args) => commands::dataset(args.config.as_deref(), &args.overrides, out),
        Command::Score(args) => commands::score(&args, out),
        Command::Ntd(cmd) => commands::ntd(&cmd),
    }
}

/// 2 for usage and configuration mistakes, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<cybertom::Error>() {
            return match e {
                cybertom::Error::Config(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
