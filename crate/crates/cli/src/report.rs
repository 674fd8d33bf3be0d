use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fdg_core::FdgError;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Failure of one invocation, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, environment or run configuration (exit 2).
    Usage(String),
    /// Everything raised while doing the actual work (exit 1).
    Domain(FdgError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Domain(e) => write!(f, "{e}"),
        }
    }
}

impl From<FdgError> for CliError {
    fn from(e: FdgError) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(FdgError::Io(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Reads a JSON run configuration, or the defaults when no file is given.
pub fn load_config<C: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<C> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub fdg: &'static str,
    pub fdg_core: &'static str,
    pub fdg_bin_format: u8,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            fdg: env!("CARGO_PKG_VERSION"),
            fdg_core: fdg_core::VERSION,
            fdg_bin_format: fdg_core::io::VERSION,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report<C: Serialize, R: Serialize> {
    pub command: &'static str,
    pub config: C,
    pub inputs: BTreeMap<&'static str, PathBuf>,
    pub results: R,
    pub versions: Versions,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

/// Where a report goes and whether it is stamped.
#[derive(Debug, Clone)]
pub struct Sink {
    pub path: Option<PathBuf>,
    pub timestamp: bool,
}

impl Sink {
    pub fn emit<C: Serialize, R: Serialize>(
        &self,
        command: &'static str,
        config: C,
        inputs: BTreeMap<&'static str, PathBuf>,
        seed: Option<u64>,
        results: R,
    ) -> CliResult<()> {
        let timestamp = self.timestamp.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        let report = Report {
            command,
            config,
            inputs,
            results,
            versions: Versions::default(),
            seed,
            timestamp,
        };
        match &self.path {
            Some(path) => fdg_core::io::write_json(&report, path)?,
            None => {
                let text = serde_json::to_string_pretty(&report).map_err(FdgError::from)?;
                println!("{text}");
            }
        }
        Ok(())
    }
}
