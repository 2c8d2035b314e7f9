use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const MANIFEST: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestInput {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Inputs (with digests) and outputs of one command run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub inputs: Vec<ManifestInput>,
    pub outputs: Vec<String>,
}

/// Output directory of one command, recording what it reads and writes.
pub(crate) struct RunDir {
    pub dir: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    /// Creates the directory and writes the resolved configuration first, so
    /// it is present even if the command fails part way.
    pub fn create(dir: &Path, command: &str, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut run = Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        };
        let path = run.output(RESOLVED_CONFIG);
        fs::write(&path, config.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(run)
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.manifest.inputs.push(ManifestInput {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Path of an output file, registered in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.output(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::State(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.output(MANIFEST);
        let manifest = self.manifest.clone();
        self.write_json(MANIFEST, &manifest)
    }
}
