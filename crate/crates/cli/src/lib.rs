//! Command-line driver: argument types, the four subcommands and their output files.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod schema;

pub use args::{Cli, Command};
pub use commands::Outcome;
pub use error::{CliError, Result};

/// Runs a parsed command without touching the filesystem (except to read
/// a topology file).
pub fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::Solve(a) => commands::solve(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Place(a) => commands::place(a),
        Command::Sweep(a) => commands::sweep(a),
    }
}

/// Output directory of a parsed command.
pub fn out_dir(command: &Command) -> &std::path::Path {
    match command {
        Command::Solve(a) => &a.common.out,
        Command::Simulate(a) => &a.common.out,
        Command::Place(a) => &a.common.out,
        Command::Sweep(a) => &a.common.out,
    }
}
