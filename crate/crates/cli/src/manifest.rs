//! Run manifests: enough to rerun a command and check its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Reduction order used by every parallel gradient and prediction pass.
pub const REDUCTION_ORDER: &str = "fixed 16-sample chunks, partial sums reduced in chunk index order";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved command configuration.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// Output file name (relative to the output directory) to SHA-256 hex.
    pub artifacts: BTreeMap<String, String>,
    pub tool_version: String,
    pub threads: usize,
    pub reduction_order: String,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("manifest {}: {e}", path.display())).into())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn hash_artifacts(dir: &Path, names: &[String]) -> Result<BTreeMap<String, String>> {
    names
        .iter()
        .map(|n| Ok((n.clone(), sha256_file(&dir.join(n))?)))
        .collect()
}
