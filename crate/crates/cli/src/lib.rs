//! The `akcs` command-line driver: sensing, reconstruction, coherence
//! studies, block audits and benchmarks, each writing a run manifest from
//! which it can be replayed byte-for-byte.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;

pub use args::{Cli, Command};
pub use commands::{cmd_bench, cmd_blocks_check, cmd_coherence, cmd_reconstruct, cmd_replay, cmd_sense, run};
pub use error::{CliError, CliResult, ExitCode};
pub use manifest::RunManifest;

use clap::Parser;

/// Parses `argv`, runs the command and returns the process exit code.
/// Failures print one JSON record on stderr.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::Success as i32;
            }
            let rendered = e.render().to_string();
            let body = rendered.split("Usage:").next().unwrap_or_default();
            let message = body.split_whitespace().collect::<Vec<_>>().join(" ");
            let message = message.trim_start_matches("error: ");
            eprintln!("{}", error::error_record(ExitCode::Usage, "-", message));
            return ExitCode::Usage as i32;
        }
    };
    match run(&cli.command) {
        Ok(_) => ExitCode::Success as i32,
        Err(e) => {
            eprintln!("{}", e.record(cli.command.name()));
            e.exit_code() as i32
        }
    }
}
