//! `locint` command line: dataset synthesis, training, interpretation,
//! evaluation, ablation, window mining and the annotation server.

pub mod commands;
pub mod server;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;

pub use commands::Cli;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const UNREADABLE: i32 = 3;
    pub const FORMAT_VERSION: i32 = 4;
    pub const MALFORMED: i32 = 5;
    pub const INVALID_INPUT: i32 = 6;
    pub const SERVER: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] locint_core::Error),
    #[error("server: {0}")]
    Server(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use locint_core::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Server(_) => exit::SERVER,
            CliError::Core(E::Io(_)) => exit::UNREADABLE,
            CliError::Core(E::FormatVersion { .. }) => exit::FORMAT_VERSION,
            CliError::Core(E::Parse(_)) => exit::MALFORMED,
            CliError::Core(_) => exit::INVALID_INPUT,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            exit::USAGE => "usage",
            exit::UNREADABLE => "unreadable_file",
            exit::FORMAT_VERSION => "format_version",
            exit::MALFORMED => "malformed_file",
            exit::INVALID_INPUT => "invalid_input",
            exit::SERVER => "server",
            _ => "failure",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Machine-readable error line written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorMessage<'a> {
    pub error: &'a str,
    pub detail: String,
}

fn report(err: &CliError) -> i32 {
    let msg = ErrorMessage { error: err.kind(), detail: err.to_string() };
    eprintln!("{}", serde_json::to_string(&msg).unwrap_or_else(|_| err.to_string()));
    err.exit_code()
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return exit::OK;
        }
        Err(e) => {
            let detail = e.render().to_string();
            let first = detail.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            return report(&CliError::Usage(first));
        }
    };
    match commands::execute(cli) {
        Ok(()) => exit::OK,
        Err(e) => report(&e),
    }
}

/// Accepts a manifest file, a directory holding `manifest.json`, or a path
/// that names the manifest without its extension.
pub fn resolve_manifest(path: &Path) -> PathBuf {
    if path.is_dir() {
        return path.join("manifest.json");
    }
    if !path.exists() && path.extension().is_none() {
        let with_ext = path.with_extension("json");
        if with_ext.exists() {
            return with_ext;
        }
    }
    path.to_path_buf()
}
