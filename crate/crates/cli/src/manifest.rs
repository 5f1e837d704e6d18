use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &Path, contents: &[u8]) -> Self {
        FileRecord {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
            bytes: contents.len() as u64,
        }
    }
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: Option<FileRecord>,
    /// Effective settings after merging config and flags.
    pub settings: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Collects inputs, outputs and stage timings while a command runs.
pub struct Recorder {
    out_dir: PathBuf,
    manifest: RunManifest,
    stage: Option<(String, Instant)>,
}

impl Recorder {
    pub fn new(command: &str, out_dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(out_dir).map_err(|e| Failure::io(out_dir, e))?;
        Ok(Recorder {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                argv: std::env::args().collect(),
                config: None,
                settings: serde_json::Value::Null,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings_ms: BTreeMap::new(),
            },
            stage: None,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn config(&mut self, path: &Path, bytes: &[u8]) {
        self.manifest.config = Some(FileRecord::of(path, bytes));
    }

    pub fn settings(&mut self, value: impl Serialize) {
        self.manifest.settings = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.into(), seed);
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
        self.manifest.inputs.push(FileRecord::of(path, &bytes));
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Failure::io(&path, e))?;
        self.manifest.outputs.push(FileRecord::of(&path, bytes));
        Ok(path)
    }

    /// Starts timing `name`, closing the previous stage.
    pub fn stage(&mut self, name: &str) {
        self.end_stage();
        log::info!("stage {name}");
        self.stage = Some((name.into(), Instant::now()));
    }

    fn end_stage(&mut self) {
        if let Some((name, start)) = self.stage.take() {
            self.manifest
                .timings_ms
                .insert(name, start.elapsed().as_secs_f64() * 1e3);
        }
    }

    /// Writes `manifest-<command>.json` and returns the manifest.
    pub fn finish(mut self) -> Result<RunManifest, Failure> {
        self.end_stage();
        let name = format!("manifest-{}.json", self.manifest.command);
        let path = self.out_dir.join(name);
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Failure::from(mrsi_cs::Error::from(e)))?;
        std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
        Ok(self.manifest)
    }
}
