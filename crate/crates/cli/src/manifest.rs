use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmittedFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Written as `manifest.json` next to the outputs it lists. Only
/// `timestamp` differs between reruns of the same configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub timestamp: String,
    pub files: Vec<EmittedFile>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Collects files as they are written so that the manifest lists every one.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<EmittedFile>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(EmittedFile {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| CliError::io(&self.root.join(name), e))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Renders a CSV through `emit` into memory, then writes it.
    pub fn write_csv<F>(&mut self, name: &str, emit: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> fblin_core::Result<()>,
    {
        let mut buf = Vec::new();
        emit(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn finish(
        self,
        command: &str,
        experiment: &str,
        config_hash: String,
        seed: u64,
    ) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            experiment: experiment.to_string(),
            config_hash,
            seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            files: self.files,
        };
        let path = self.root.join(MANIFEST_NAME);
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::io(&path, e))?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
