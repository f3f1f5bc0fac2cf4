//! Task manifests.
//!
//! A manifest is UTF-8 text made of records separated by blank lines. Each
//! record holds `key = value` lines; `#` starts a comment line.
//!
//! ```text
//! name = man_pets_dog
//! clip = clips/man_pets_dog.vclip
//! prompt_id = 3
//! preserved = 5
//! audio_seed = 11
//! comment = Man pets dog
//! lr = 0.005
//! ```
//!
//! `name`, `clip`, `prompt_id` and `preserved` are required. `audio_seed` and
//! `comment` are optional. Any other key is kept as a per-task config
//! override. Relative clip paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::clip::{read_clip, VideoClip};
use crate::error::{Error, Result};

/// One edit: the source clip plus the seeds standing in for the prompt and
/// the source audio.
#[derive(Debug, Clone, PartialEq)]
pub struct EditTask {
    pub name: String,
    pub source: VideoClip,
    /// Seed for the source-audio latent; `None` means the clip has no audio.
    pub audio_seed: Option<u64>,
    pub prompt_id: u64,
    /// Number of preserved source frames `K`.
    pub preserved: usize,
    pub comment: Option<String>,
}

impl EditTask {
    pub fn new(name: impl Into<String>, source: VideoClip, prompt_id: u64, preserved: usize) -> Result<Self> {
        let task = Self {
            name: name.into(),
            source,
            audio_seed: None,
            prompt_id,
            preserved,
            comment: None,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn with_audio_seed(mut self, seed: u64) -> Self {
        self.audio_seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.source.dims().frames;
        if self.preserved < 1 || self.preserved >= t {
            return Err(Error::Precondition(format!(
                "task `{}`: preserved frames K = {} must lie in [1, {}]",
                self.name,
                self.preserved,
                t.saturating_sub(1)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub task: EditTask,
    pub clip_path: PathBuf,
    /// Config overrides in file order, as raw `(key, value)` text.
    pub overrides: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskManifest {
    pub path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl TaskManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &EditTask> {
        self.entries.iter().map(|e| &e.task)
    }
}

/// Raw record: line-ordered key/value pairs.
type Record = Vec<(String, String)>;

fn split_records(text: &str, path: &Path) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    let mut current: Record = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.is_empty() {
                records.push(std::mem::take(&mut current));
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let Some((k, v)) = trimmed.split_once('=') else {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                record: records.len(),
                message: format!("line {}: expected `key = value`", lineno + 1),
            });
        };
        current.push((k.trim().to_string(), v.trim().to_string()));
    }
    if !current.is_empty() {
        records.push(current);
    }
    Ok(records)
}

fn parse_entry(record: Record, index: usize, path: &Path, base: &Path) -> Result<ManifestEntry> {
    let err = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        record: index,
        message,
    };
    let mut name = None;
    let mut clip = None;
    let mut prompt_id = None;
    let mut preserved = None;
    let mut audio_seed = None;
    let mut comment = None;
    let mut overrides = Vec::new();
    let mut seen = HashSet::new();

    for (key, value) in record {
        if !seen.insert(key.clone()) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        let int = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| err(format!("`{key}` must be a non-negative integer, got `{v}`")))
        };
        match key.as_str() {
            "name" => name = Some(value),
            "clip" => clip = Some(value),
            "prompt_id" => prompt_id = Some(int(&value)?),
            "preserved" => preserved = Some(int(&value)? as usize),
            "audio_seed" => audio_seed = Some(int(&value)?),
            "comment" => comment = Some(value),
            _ => overrides.push((key, value)),
        }
    }

    let name = name.ok_or_else(|| err("missing `name`".into()))?;
    let clip = clip.ok_or_else(|| err(format!("task `{name}`: missing `clip`")))?;
    let prompt_id = prompt_id.ok_or_else(|| err(format!("task `{name}`: missing `prompt_id`")))?;
    let preserved = preserved.ok_or_else(|| err(format!("task `{name}`: missing `preserved`")))?;

    let clip_path = {
        let p = PathBuf::from(&clip);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    if !clip_path.is_file() {
        return Err(Error::MissingFile(clip_path));
    }
    let source = read_clip(&clip_path)?;
    let task = EditTask {
        name,
        source,
        audio_seed,
        prompt_id,
        preserved,
        comment,
    };
    task.validate().map_err(|e| err(e.to_string()))?;
    Ok(ManifestEntry {
        task,
        clip_path,
        overrides,
    })
}

/// Parses manifest text; `path` locates relative clip references.
pub fn parse_task_manifest(text: &str, path: &Path) -> Result<TaskManifest> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    let mut names = HashSet::new();
    for (i, record) in split_records(text, path)?.into_iter().enumerate() {
        let entry = parse_entry(record, i, path, base)?;
        if !names.insert(entry.task.name.clone()) {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                record: i,
                message: format!("duplicate scenario name `{}`", entry.task.name),
            });
        }
        entries.push(entry);
    }
    Ok(TaskManifest {
        path: path.to_path_buf(),
        entries,
    })
}

pub fn load_task_manifest(path: impl AsRef<Path>) -> Result<TaskManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_task_manifest(&text, path)
}

/// Renders entries back into manifest text.
pub fn render_task_manifest(entries: &[(EditTask, String, Vec<(String, String)>)]) -> String {
    let mut out = String::new();
    for (i, (task, clip, overrides)) in entries.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("name = {}\n", task.name));
        out.push_str(&format!("clip = {clip}\n"));
        out.push_str(&format!("prompt_id = {}\n", task.prompt_id));
        out.push_str(&format!("preserved = {}\n", task.preserved));
        if let Some(seed) = task.audio_seed {
            out.push_str(&format!("audio_seed = {seed}\n"));
        }
        if let Some(c) = &task.comment {
            out.push_str(&format!("comment = {c}\n"));
        }
        for (k, v) in overrides {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}
