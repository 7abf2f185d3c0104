//! `manifest.json` written next to every artifact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NptError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(artifact: &str, config_hash: String, seeds: Vec<u64>) -> Self {
        Self {
            artifact: artifact.to_string(),
            config_hash,
            seeds,
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            extra: serde_json::Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: serde_json::Value) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| NptError::io(dir, e))?;
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| NptError::io(&path, e))
    }
}
