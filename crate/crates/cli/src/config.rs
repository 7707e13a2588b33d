use std::path::{Path, PathBuf};

use graspshare::{FitConfig, SolverConfig};
use serde::Deserialize;

use crate::CliError;

/// Settings read from `--config`; any flag given on the command line wins.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub fit: FitConfig,
    pub solver: SolverConfig,
    pub service: ServiceSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub models_dir: Option<PathBuf>,
    pub bounds: Option<PathBuf>,
    pub alignment: Option<PathBuf>,
    pub human_model: Option<String>,
    pub rate_limit: Option<u32>,
    pub history: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }
}
