use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::relative;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every stage's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file, relative to the stage directory, to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self> {
        Ok(Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: config.seed()?,
            config_hash: config.hash(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.inputs
            .insert(path.to_string_lossy().replace('\\', "/"), hash);
        Ok(())
    }

    pub fn add_output(&mut self, stage_dir: &Path, path: &Path) -> Result<()> {
        let hash = sha256_file(path)?;
        self.outputs.insert(relative(path, stage_dir), hash);
        Ok(())
    }

    pub fn write(&self, stage_dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(stage_dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn read(stage_dir: &Path) -> Result<Self> {
        let file = File::open(stage_dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    /// Loads the manifest of the stage `command` wrote into `stage_dir`,
    /// failing with a dependency error when the stage has not run. Warns
    /// when it ran under another configuration or its outputs changed since.
    pub fn require(stage_dir: &Path, command: &str, config: &RunConfig) -> Result<Self> {
        let path = stage_dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                path,
                command: command.to_owned(),
            });
        }
        let manifest = Self::read(stage_dir)?;
        if manifest.config_hash != config.hash() {
            log::warn!(
                "{} was produced by `{command}` under a different configuration; rerun it to refresh",
                stage_dir.display()
            );
        }
        for (file, hash) in &manifest.outputs {
            let p = stage_dir.join(file);
            if !p.is_file() {
                return Err(Error::MissingArtifact {
                    path: p,
                    command: command.to_owned(),
                });
            }
            if &sha256_file(&p)? != hash {
                log::warn!("{} changed after `{command}` wrote it", p.display());
            }
        }
        Ok(manifest)
    }
}
