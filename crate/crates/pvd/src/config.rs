//! Run configuration shared by the CLI commands.

use std::path::{Path, PathBuf};

use pvd_core::binding::DEFAULT_BINDING_CAP;
use pvd_core::optimizer::DEFAULT_CANDIDATE_CAP;
use pvd_core::structures::DEFAULT_CELL_CAP;
use pvd_core::DeploymentModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Deploy {
        path: PathBuf,
        source: pvd_core::deploy::DeployError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    pub bindings: u64,
    pub candidates: usize,
    pub cube_cells: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            bindings: DEFAULT_BINDING_CAP,
            candidates: DEFAULT_CANDIDATE_CAP,
            cube_cells: DEFAULT_CELL_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub spec_path: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub deployment: DeploymentModel,
    pub seed: u64,
    pub caps: Caps,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spec_path: None,
            data_dir: None,
            deployment: DeploymentModel::lan(),
            seed: 7,
            caps: Caps::default(),
            output_dir: None,
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(&read(path)?).map_err(|e| ConfigError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        cfg.deployment.validate().map_err(|e| ConfigError::Deploy {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(cfg)
    }
}

/// `lan`, `wan`, or a path to a deployment JSON file.
pub fn load_deployment(arg: &str) -> Result<DeploymentModel, ConfigError> {
    match arg {
        "lan" => Ok(DeploymentModel::lan()),
        "wan" => Ok(DeploymentModel::wan()),
        path => {
            let path = Path::new(path);
            let dm: DeploymentModel = serde_json::from_str(&read(path)?).map_err(|e| ConfigError::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
            dm.validate().map_err(|e| ConfigError::Deploy {
                path: path.to_path_buf(),
                source: e,
            })?;
            Ok(dm)
        }
    }
}
