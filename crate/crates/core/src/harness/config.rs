//! TOML run configuration. Every key is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{config_hash, FeatureConfig};
use crate::model::TrainConfig;
use crate::preprocess::PreprocessConfig;
use crate::simulate::SimConfig;

use super::eval::EvalConfig;

/// Default dataset root when no path is given on the command line.
pub const DATASET_ENV: &str = "VAHF_DATASET";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub seed: u64,
    pub users: u32,
    pub exec: Exec,
    pub sim: SimConfig,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            users: 10,
            exec: Exec::Parallel,
            sim: SimConfig::default(),
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::dataset(path, e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// Sets the seed everywhere it is consumed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            train: TrainConfig {
                seed: self.seed,
                ..self.train.clone()
            },
            exec: self.exec,
        }
    }

    /// Hash of everything that affects results; `exec` is left out because
    /// both executors give the same output.
    pub fn hash(&self) -> String {
        let mut c = self.clone().with_seed(self.seed);
        c.exec = Exec::Sequential;
        config_hash(&c)
    }
}

/// `explicit`, else `$VAHF_DATASET`.
pub fn dataset_root(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATASET_ENV).map(PathBuf::from))
}
