//! The `pedrisk` command line. [`run`] parses arguments, resolves settings
//! (flag, then `PEDRISK_*` variable, then config file, then default) and
//! dispatches to one subcommand.

mod args;
mod commands;
mod config;
mod error;
mod manifest;

use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;
use tracing::Level;

pub use args::{Cli, Command};
pub use config::{FileConfig, Workdir};
pub use error::CliError;
pub use manifest::{RunManifest, RUN_MANIFEST_FILE};

/// Everything a subcommand needs besides its own arguments.
pub struct Context {
    pub argv: Vec<String>,
    pub workdir: Workdir,
    pub config: FileConfig,
}

/// Run one command line and return the process exit code.
pub fn run(argv: Vec<String>) -> u8 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    init_logging(&cli);
    match execute(cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(cli: &Cli) {
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => Level::WARN,
        (false, 0) => Level::INFO,
        (false, 1) => Level::DEBUG,
        _ => Level::TRACE,
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .try_init();
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let workdir = Workdir::new(cli.workdir.clone())?;
    let mut config = match &cli.config {
        Some(path) => FileConfig::load(&workdir.path(path))?,
        None => FileConfig::default(),
    };
    config.apply_globals(cli.seed, cli.threads);
    config.resolve_paths(&workdir);
    let mut ctx = Context { argv, workdir, config };
    match cli.command {
        Command::Synth(a) => commands::synth(&mut ctx, a),
        Command::Train(a) => commands::train(&mut ctx, a),
        Command::Eval(a) => commands::eval(&mut ctx, a),
        Command::Serve(a) => commands::serve(&mut ctx, a),
        Command::Predict(a) => commands::predict(&mut ctx, a),
    }
}
