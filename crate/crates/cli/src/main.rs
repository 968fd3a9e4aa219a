use std::process::ExitCode;

use cachecast_cli::{execute, out_dir, output, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match execute(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if let Err(e) = output::write_all(out_dir(&cli.command), &outcome.artifacts) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    println!("{}", outcome.summary);
    ExitCode::from(outcome.status as u8)
}
