//! The `--out` directory and the run manifest that lists what went in and
//! what came out.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dua_core::data::{write_atomic, DatasetManifest};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Value,
    /// The fully resolved configuration; no field is left to a default.
    pub config: Value,
    /// Input path → SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
    pub duration_seconds: f64,
}

/// Collects artifacts inside one directory. Every write is atomic.
pub struct RunDir {
    dir: PathBuf,
    command: &'static str,
    started: Instant,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::data(format!(
                "cannot create output directory {}: {e}",
                dir.display()
            ))
        })?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            command,
            started: Instant::now(),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
        })
    }

    /// Path of an artifact; `name` is a bare file name.
    pub fn path(&self, name: &str) -> PathBuf {
        debug_assert!(!name.contains('/') && !name.contains(".."));
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        write_atomic(&self.path(name), contents.as_bytes())?;
        self.record(name);
        Ok(())
    }

    /// Notes an artifact written by someone else into [`RunDir::path`].
    pub fn record(&mut self, name: &str) {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
    }

    pub fn hash_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.insert(
            path.display().to_string(),
            hex::encode(Sha256::digest(&bytes)),
        );
        Ok(())
    }

    /// Hashes a dataset manifest and every file it references.
    pub fn hash_dataset(&mut self, manifest: &Path) -> Result<(), CliError> {
        self.hash_input(manifest)?;
        let m = DatasetManifest::read(manifest)?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        for v in &m.views {
            self.hash_input(&base.join(&v.file))?;
        }
        if let Some(l) = &m.labels {
            self.hash_input(&base.join(l))?;
        }
        Ok(())
    }

    /// Writes the manifest last so it lists every other artifact.
    pub fn finish(mut self, seed: Value, config: &impl Serialize) -> Result<PathBuf, CliError> {
        self.record(MANIFEST_FILE);
        let manifest = RunManifest {
            command: self.command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config).expect("configs serialize"),
            inputs: std::mem::take(&mut self.inputs),
            artifacts: self.artifacts.clone(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.path(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}
