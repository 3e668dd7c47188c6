//! Stage orchestration for the broomscan command-line tool.

pub mod config;
pub mod error;
pub mod manifest;
pub mod planes;
pub mod stages;

use std::path::PathBuf;

pub use config::{DataSource, RunConfig};
pub use error::CliError;
pub use stages::{Context, Stage, StageStatus};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Loads the config (defaults when `path` is `None`), applies overrides
/// and the cache-dir environment variable, and validates the result.
pub fn prepare(path: Option<&std::path::Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &overrides.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    cfg.apply_env();
    cfg.validate()?;
    Ok(cfg)
}
