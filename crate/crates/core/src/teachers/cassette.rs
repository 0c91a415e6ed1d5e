//! Record/replay store for teacher calls.
//!
//! A cassette directory holds append-only `*.jsonl` files, one per teacher,
//! each line a [`TeacherRecord`] keyed by [`cache_key`].

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TeacherError, TeacherId};
use crate::spanlab::LabelClass;

/// One teacher invocation as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherRecord {
    pub key: String,
    pub model: String,
    pub task: LabelClass,
    pub doc_id: String,
    pub raw_response: String,
    pub entities: Vec<String>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub latency_ms: u64,
}

/// SHA-256 over teacher name, task code and the rendered prompt, NUL-separated.
pub fn cache_key(teacher: &TeacherId, task: LabelClass, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(teacher.as_str().as_bytes());
    h.update([0]);
    h.update(task.code().as_bytes());
    h.update([0]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

/// Token count fallback when an endpoint reports no usage: ceil(bytes / 4).
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Debug)]
pub struct CassetteStore {
    dir: PathBuf,
    loaded: HashMap<String, TeacherRecord>,
    // New records from this session; the lock also serializes file appends.
    recorded: Mutex<HashMap<String, TeacherRecord>>,
}

impl CassetteStore {
    /// Loads every `*.jsonl` file in `dir`. A missing directory is an empty store.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TeacherError> {
        let dir = dir.into();
        let mut loaded = HashMap::new();
        if dir.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            for path in files {
                load_file(&path, &mut loaded)?;
            }
        }
        Ok(CassetteStore {
            dir,
            loaded,
            recorded: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.loaded.len() + self.recorded.lock().expect("cassette lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<TeacherRecord> {
        if let Some(r) = self.loaded.get(key) {
            return Some(r.clone());
        }
        self.recorded.lock().expect("cassette lock").get(key).cloned()
    }

    /// Appends a record to `<teacher>.jsonl`; a key already present is left untouched.
    pub fn insert(&self, teacher: &TeacherId, record: TeacherRecord) -> Result<(), TeacherError> {
        if self.loaded.contains_key(&record.key) {
            return Ok(());
        }
        let mut recorded = self.recorded.lock().expect("cassette lock");
        if recorded.contains_key(&record.key) {
            return Ok(());
        }
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("{}.jsonl", file_stem(teacher.as_str())));
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(line.as_bytes())?;
        recorded.insert(record.key.clone(), record);
        Ok(())
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' { c } else { '_' })
        .collect()
}

fn load_file(path: &Path, into: &mut HashMap<String, TeacherRecord>) -> Result<(), TeacherError> {
    let text = fs::read_to_string(path)?;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| TeacherError::Cassette {
            path: path.display().to_string(),
            line: idx + 1,
            msg,
        };
        let rec: TeacherRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        match into.get(&rec.key) {
            Some(existing) if existing != &rec => {
                return Err(err(format!("conflicting record for key {}", rec.key)));
            }
            Some(_) => {}
            None => {
                into.insert(rec.key.clone(), rec);
            }
        }
    }
    Ok(())
}
