//! The `alr` command-line tool and reward service over `alr-core`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod service;
pub mod transport;

pub use args::Cli;

/// Runs a parsed invocation and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
