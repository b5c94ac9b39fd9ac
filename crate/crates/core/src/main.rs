use std::process::ExitCode;

use clap::Parser;
use tfchain::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
