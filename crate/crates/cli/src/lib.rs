//! Command-line front end: `train`, `eval`, `predict` and `sweep-alpha`.

pub mod args;
pub mod commands;
pub mod error;
pub mod settings;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use commands::ALPHA_GRID;
pub use error::{CliError, CliResult};

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("HIGRU_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "HIGRU_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    // A pool installed earlier in this process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    init_threads()?;
    match &cli.command {
        args::Command::Train(a) => commands::train(a),
        args::Command::Eval(a) => commands::eval(a),
        args::Command::Predict(a) => commands::predict(a),
        args::Command::SweepAlpha(a) => commands::sweep_alpha(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
