//! Per-command run manifests. Every command writes `run-<command>.json` next
//! to its artifacts, listing digests of what it read and wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub tool_version: String,
    /// SHA-256 of the effective configuration as canonical JSON.
    pub config_sha256: Option<String>,
    pub config: Option<serde_json::Value>,
    pub seed: Option<u64>,
    /// Input path → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Artifact path relative to the output directory → SHA-256.
    pub artifacts: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects a manifest while a command runs.
pub struct Recorder {
    out: PathBuf,
    manifest: RunManifest,
    input_paths: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(command: &str, argv: &[String], out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        Ok(Self {
            out: out.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                argv: argv.to_vec(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_sha256: None,
                config: None,
                seed: None,
                inputs: BTreeMap::new(),
                artifacts: BTreeMap::new(),
                started_at: now(),
                finished_at: String::new(),
            },
            input_paths: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    /// Reads an input file and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.manifest.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        self.input_paths.push(path.canonicalize().map_err(|e| CliError::io(path, e))?);
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.read(path)?).map_err(|_| CliError::Data(format!("{} is not UTF-8", path.display())))
    }

    pub fn config<T: Serialize>(&mut self, config: &T) -> Result<()> {
        let value = serde_json::to_value(config)?;
        self.manifest.config_sha256 = Some(sha256_hex(serde_json::to_string(&value)?.as_bytes()));
        self.manifest.config = Some(value);
        Ok(())
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    /// Writes `name` (relative, may contain `/`) under the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.target(name)?;
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Output path for an artifact another writer produces; follow with
    /// [`Recorder::record_existing`].
    pub fn target(&self, name: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        if let Ok(existing) = path.canonicalize() {
            if self.input_paths.contains(&existing) {
                return Err(CliError::Usage(format!("refusing to overwrite input {}", path.display())));
            }
        }
        Ok(path)
    }

    pub fn record_existing(&mut self, name: &str) -> Result<()> {
        let path = self.out.join(name);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.manifest.artifacts.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        self.manifest.finished_at = now();
        let name = format!("run-{}.json", self.manifest.command);
        let path = self.out.join(&name);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(self.manifest)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
