//! Stage manifests and the content hash that makes reruns no-ops.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: u32,
    pub inputs_hash: String,
    pub parameters: serde_json::Value,
    /// Relative to the stage directory.
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Option<Manifest> {
        let text = fs::read(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_slice(&text).ok()
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_vec_pretty(self).expect("manifest serializes");
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn outputs_present(&self, dir: &Path) -> bool {
        self.outputs.iter().all(|p| dir.join(p).exists())
    }
}

/// Every regular file under `path` (or `path` itself), in sorted order,
/// skipping stage manifests.
fn files_under(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("missing input {}", path.display())));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Io(e.to_string()))?;
        if entry.file_type().is_file() && entry.file_name() != MANIFEST_FILE {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

/// SHA-256 over the stage name, format version, parameters, and the
/// relative path and bytes of every input file.
pub fn inputs_hash(stage: &str, parameters: &serde_json::Value, inputs: &[PathBuf]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update(FORMAT_VERSION.to_le_bytes());
    h.update(serde_json::to_vec(parameters).expect("parameters serialize"));
    for root in inputs {
        for file in files_under(root)? {
            let rel = file.strip_prefix(root).unwrap_or(&file);
            h.update(rel.to_string_lossy().as_bytes());
            let bytes = fs::read(&file)?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Lists files produced under `dir`, relative to it, excluding the manifest.
pub fn list_outputs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    Ok(files_under(dir)?
        .into_iter()
        .map(|p| p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or(p))
        .collect())
}
