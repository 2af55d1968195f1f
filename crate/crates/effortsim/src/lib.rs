//! Experiment harness for `effortsim-core`: config files, CSV/JSON/SVG
//! output, run manifests and the `effortsim` command line.
// Negated comparisons are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod svg;

use std::path::PathBuf;

use clap::Parser;

pub use commands::{Command, Run};
pub use error::{HarnessError, Result};

#[derive(Debug, Parser)]
#[command(name = "effortsim", version, about = "Effort-based unfairness and imitation dynamics")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs one invocation and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = pipeline::threads_from_env()
        .and_then(|threads| Run::load(&cli.config, &cli.out, cli.seed, threads))
        .and_then(|run| run.execute(cli.command));
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("effortsim: {e}");
            e.exit_code()
        }
    }
}
