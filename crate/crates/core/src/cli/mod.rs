//! Command-line front end. Every command writes CSV with an echoed
//! configuration header; see `docs/formats`.

pub mod commands;
pub mod config;
pub mod csv;

use std::ffi::OsString;
use std::io::Write;

pub use commands::run;
pub use config::{config_from_header, parse_config, CommandName, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Clap(clap::Error),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

/// Parses, runs and writes the output; returns the process exit status.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match parse_config(argv) {
        Ok(c) => c,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
        Err(e) => {
            eprintln!("casotto: {e}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.settings.jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("casotto: thread pool: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let table = pool.install(|| run(&cfg));
    let text = table.render(&cfg);
    let written = match &cfg.settings.output {
        Some(path) => std::fs::write(path, text.as_bytes()).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("casotto: {}", CliError::Io(e));
        return EXIT_NUMERICAL;
    }
    match &table.failure {
        Some(msg) => {
            eprintln!("casotto: numerical failure: {msg}");
            EXIT_NUMERICAL
        }
        None => EXIT_OK,
    }
}
