//! Command implementations behind the `aslks` binary.
//!
//! Exit codes: 0 when everything passed, 1 for a verification failure, 2 for
//! usage, parse or shape errors.

use std::fs;
use std::path::{Path, PathBuf};

use aslks_core::Dims4;
use thiserror::Error;

pub mod bench;
pub mod checks;
pub mod flops;
pub mod metrics_cmd;
pub mod verify;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Caps inner parallelism; `0` or unset means one thread per core.
pub const THREADS_ENV: &str = "ASLKS_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Parse(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Core(#[from] aslks_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => EXIT_FAIL,
            _ => EXIT_USAGE,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses `N,C,H,W`.
pub fn parse_dims(s: &str) -> Result<Dims4, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [usize; 4] = parts
        .try_into()
        .map_err(|v: Vec<usize>| format!("expected N,C,H,W (4 values), got {}", v.len()))?;
    if arr.contains(&0) {
        return Err(format!("every axis must be >= 1, got {s}"));
    }
    Ok(Dims4::from(arr))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `text` to `out`, or to stdout when `out` is `None`.
pub fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Builds the global rayon pool from [`THREADS_ENV`].
pub fn configure_threads() -> CliResult<()> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|e| CliError::Usage(format!("{THREADS_ENV}='{v}': {e}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}
