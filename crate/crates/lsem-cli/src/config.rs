//! Optional JSON config file: any field a subcommand understands may be set
//! here; command-line flags always win.

use crate::errors::{CliError, CliResult};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub h: Option<f64>,
    pub d: Option<usize>,
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    pub trials: Option<usize>,
    pub runs: Option<usize>,
    pub m: Option<usize>,
    pub tau: Option<f64>,
    pub centers: Option<usize>,
    pub region_std: Option<f64>,
    pub instance_eps: Option<f64>,
    pub source: Option<String>,
    pub family: Option<String>,
    pub mode: Option<String>,
    pub target: Option<String>,
    pub symmetric: Option<bool>,
    pub center: Option<bool>,
    pub eps_list: Option<Vec<f64>>,
    pub data: Option<PathBuf>,
    pub graph: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }
}

/// Merge helper: command-line value, else config value, else default.
pub fn pick<T: Clone>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

/// As [`pick`] but with no default; reports the flag name when absent.
pub fn require<T: Clone>(cli: Option<T>, file: Option<T>, flag: &str) -> CliResult<T> {
    cli.or(file)
        .ok_or_else(|| CliError::validation(format!("--{flag} is required (flag or config file)")))
}
