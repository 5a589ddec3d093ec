//! Completion marker listing what a run produced.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diag::CliError;
use crate::io::write_atomic;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub model: String,
    /// Flags that shaped the outputs (ε, seeds, grids, simulation settings).
    pub parameters: serde_json::Value,
    pub outputs: Vec<String>,
    pub version: String,
    pub wall_time_s: f64,
}

impl RunManifest {
    /// Writes the manifest last, atomically, next to the outputs.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::numerical("SerializeError", e.to_string()))?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::input("IoError", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input("InvalidManifest", e.to_string()))
    }
}
