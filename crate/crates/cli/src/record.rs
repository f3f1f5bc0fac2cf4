//! Run records: everything needed to re-run a command, plus checksums of
//! every file it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RECORD_FILE: &str = "run_record.json";
/// Written by `eval`, which may share a directory with a tuning run.
pub const EVAL_RECORD_FILE: &str = "eval_record.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub name: String,
    pub config: BTreeMap<String, String>,
    pub overrides: Vec<(String, String)>,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub args: Vec<String>,
    pub manifest: Option<PathBuf>,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub tasks: Vec<TaskRecord>,
    /// Per-task wall-clock seconds live here, outside the deterministic outputs.
    pub timings_file: Option<String>,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

impl RunRecord {
    pub fn new(command: &str, args: Vec<String>, seed: u64) -> Self {
        Self {
            command: command.into(),
            args,
            manifest: None,
            seed,
            config: BTreeMap::new(),
            tasks: Vec::new(),
            timings_file: None,
            outputs: Vec::new(),
        }
    }

    /// Records `path` (relative to `root` when possible) with its checksum.
    pub fn add_output(&mut self, root: &Path, path: &Path) -> std::io::Result<()> {
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.outputs.push(OutputRecord {
            path: rel.to_string_lossy().into_owned(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path, file_name: &str) -> std::io::Result<PathBuf> {
        let path = dir.join(file_name);
        let text = serde_json::to_string_pretty(self).expect("record serializes");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(RECORD_FILE))?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
