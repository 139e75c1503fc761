use std::path::PathBuf;
use std::process::ExitCode;

use beamcausal_cli::{commands, config, exit, Profile, Stage};
use clap::{Parser, Subcommand};

/// Causal sensing-beam selection pipeline.
///
/// Settings are layered: the profile, then the --config file
/// (`section.key = value` lines), then BEAMCAUSAL_SECTION__KEY environment
/// variables (for example BEAMCAUSAL_SCENE__N_USERS=2000), then --seed.
///
/// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
/// failure, 5 output directory locked by another run.
#[derive(Debug, Parser)]
#[command(name = "beamcausal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: Profile,

    /// Global seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Existing directory that stages read from and write to.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate the synthetic scene and write the dataset.
    Gen,
    /// Learn the causal graph over sensing beams and the label.
    Discover,
    /// Choose `select.m_tilde` sensing beams with `select.method`.
    Select,
    /// Train the classifier on the selected beams.
    Train,
    /// Score the trained classifier on `bench.split`.
    Eval,
    /// Every method in `bench.methods` over every budget in `bench.grid`.
    Bench,
    /// Print the resolved configuration.
    Config,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match config::load(cli.profile, cli.config.as_deref(), std::env::vars(), cli.seed) {
        Ok(cfg) => cfg,
        Err(e) => return fail(e),
    };
    let stage = match cli.command {
        Command::Gen => Stage::Gen,
        Command::Discover => Stage::Discover,
        Command::Select => Stage::Select,
        Command::Train => Stage::Train,
        Command::Eval => Stage::Eval,
        Command::Bench => Stage::Bench,
        Command::Config => {
            print!("{cfg}");
            return ExitCode::from(exit::OK as u8);
        }
    };
    match commands::run(stage, &cfg, &cli.out) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for p in &outcome.outputs {
                println!("wrote {}", p.display());
            }
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => fail(e),
    }
}

fn fail(e: beamcausal_cli::CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
