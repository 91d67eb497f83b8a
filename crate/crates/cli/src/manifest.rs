//! Run-directory outputs and their manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

/// Collects inputs and outputs of one command and writes
/// `<command>.manifest.json` next to the outputs. No timestamps, so a
/// repeated run yields the same manifest.
pub struct RunDir {
    dir: PathBuf,
    command: String,
    config: serde_json::Value,
    inputs: BTreeMap<String, FileEntry>,
    outputs: BTreeMap<String, FileEntry>,
    notes: BTreeMap<String, serde_json::Value>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunDir {
    pub fn create(dir: &Path, command: &str, config: &impl Serialize) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            config: serde_json::to_value(config)?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.insert(
            role.into(),
            FileEntry {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.notes.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Writes `name` under the run directory and records its hash.
    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes.as_ref()).with_context(|| format!("writing {}", path.display()))?;
        self.record(name)?;
        Ok(path)
    }

    /// Records a file some library call already wrote under the run directory.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let sha256 = sha256_file(&path)?;
        self.outputs.insert(
            name.into(),
            FileEntry {
                path: name.into(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            version: &'a str,
            config: &'a serde_json::Value,
            inputs: &'a BTreeMap<String, FileEntry>,
            outputs: &'a BTreeMap<String, FileEntry>,
            #[serde(skip_serializing_if = "BTreeMap::is_empty")]
            notes: &'a BTreeMap<String, serde_json::Value>,
        }
        let m = Manifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            inputs: &self.inputs,
            outputs: &self.outputs,
            notes: &self.notes,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        let path = self.path(&format!("{}.manifest.json", self.command));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
