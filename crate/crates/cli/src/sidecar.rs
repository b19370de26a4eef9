use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ctl_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    /// SHA-256 of the file, absent for directories.
    pub sha256: Option<String>,
}

/// Provenance written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String]) -> Self {
        Self {
            tool: "ctl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: args.to_vec(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = if path.is_file() {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            Some(format!("{:x}", Sha256::digest(&bytes)))
        } else {
            None
        };
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.into(), value);
    }

    /// Sidecar location for an output file or directory.
    pub fn path_for(anchor: &Path) -> PathBuf {
        if anchor.is_dir() {
            anchor.join("run.json")
        } else {
            let mut name = anchor.file_name().unwrap_or_default().to_os_string();
            name.push(".run.json");
            anchor.with_file_name(name)
        }
    }

    pub fn write(&self, anchor: &Path) -> Result<PathBuf> {
        let path = Self::path_for(anchor);
        let json = serde_json::to_string_pretty(self).expect("run manifests serialize");
        ctl_core::io::write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}
