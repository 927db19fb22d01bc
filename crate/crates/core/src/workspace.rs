//! File-backed document store.
//!
//! Documents are JSON blobs stored once under `objects/<sha256>.json`. The
//! `index.json` file maps each key to its current hash and version; writers
//! compare-and-swap on the version. Deletes are tombstones, and every change
//! is appended to `journal.jsonl`. Grading runs additionally journal each
//! graded cell to `runs/<run_id>.cells.jsonl` as soon as it exists.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grading::GradeCell;

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("io on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt document {key}: {message}")]
    Corrupt { key: String, message: String },
    #[error("document {key} is at version {current}, not {expected}")]
    VersionConflict { key: String, expected: u64, current: u64 },
    #[error("no document {0}")]
    NotFound(String),
    #[error("invalid key `{0}`")]
    InvalidKey(String),
}

pub type Result<T, E = WorkspaceError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub version: u64,
    pub hash: String,
    #[serde(default)]
    pub tombstoned: bool,
    /// Earlier hashes, oldest first.
    #[serde(default)]
    pub history: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Index {
    #[serde(default)]
    documents: BTreeMap<String, IndexEntry>,
    #[serde(default)]
    run_counter: u64,
}

#[derive(Debug, Serialize)]
struct JournalEntry<'a> {
    at: DateTime<Utc>,
    op: &'a str,
    key: &'a str,
    version: u64,
    hash: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Versioned<T> {
    pub version: u64,
    pub value: T,
}

pub struct Workspace {
    root: PathBuf,
    lock: Mutex<()>,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace").field("root", &self.root).finish()
    }
}

fn check_key(key: &str) -> Result<()> {
    let ok = !key.is_empty()
        && !key.starts_with('/')
        && key.split('/').all(|part| !part.is_empty() && part != "." && part != "..")
        && !key.contains(['\\', '\0', '\n']);
    if ok {
        Ok(())
    } else {
        Err(WorkspaceError::InvalidKey(key.to_string()))
    }
}

/// Writes via a temporary sibling and a rename so readers never see partial files.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(bytes).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Workspace {
    /// Opens the workspace at `root`, creating the layout when missing.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in [root.clone(), root.join("objects"), root.join("runs")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let ws = Workspace { root, lock: Mutex::new(()) };
        if !ws.index_path().exists() {
            ws.with_lock(|| if ws.index_path().exists() { Ok(()) } else { ws.write_index(&Index::default()) })?;
        }
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn object_path(&self, hash: &str) -> PathBuf {
        self.root.join("objects").join(format!("{hash}.json"))
    }

    /// Serializes writers within this process and across processes.
    fn with_lock<T>(&self, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.root.join(".lock");
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(&path).map_err(io_err(&path))?;
        file.lock().map_err(io_err(&path))?;
        let result = f();
        let _ = file.unlock();
        result
    }

    fn read_index(&self) -> Result<Index> {
        let path = self.index_path();
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| WorkspaceError::Corrupt {
            key: "index.json".into(),
            message: e.to_string(),
        })
    }

    fn write_index(&self, index: &Index) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(index).expect("index serializes");
        write_atomic(&self.index_path(), &bytes)
    }

    fn append_journal(&self, entry: &JournalEntry<'_>) -> Result<()> {
        let path = self.root.join("journal.jsonl");
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        let line = serde_json::to_string(entry).expect("journal entry serializes") + "\n";
        file.write_all(line.as_bytes()).map_err(io_err(&path))
    }

    /// Current version of `key`; 0 when absent or deleted.
    pub fn version(&self, key: &str) -> Result<u64> {
        Ok(self
            .read_index()?
            .documents
            .get(key)
            .filter(|e| !e.tombstoned)
            .map_or(0, |e| e.version))
    }

    pub fn get_raw(&self, key: &str) -> Result<Option<Versioned<serde_json::Value>>> {
        self.get(key)
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<Versioned<T>>> {
        check_key(key)?;
        let index = self.read_index()?;
        let Some(entry) = index.documents.get(key).filter(|e| !e.tombstoned) else {
            return Ok(None);
        };
        let path = self.object_path(&entry.hash);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let value = serde_json::from_slice(&bytes).map_err(|e| WorkspaceError::Corrupt {
            key: key.to_string(),
            message: e.to_string(),
        })?;
        Ok(Some(Versioned {
            version: entry.version,
            value,
        }))
    }

    pub fn require<T: DeserializeOwned>(&self, key: &str) -> Result<Versioned<T>> {
        self.get(key)?.ok_or_else(|| WorkspaceError::NotFound(key.to_string()))
    }

    /// Stores `value` under `key`. With `expected_version`, the write only
    /// happens if the key is currently at that version (0 = absent).
    /// Returns the new version.
    pub fn put<T: Serialize + ?Sized>(&self, key: &str, value: &T, expected_version: Option<u64>) -> Result<u64> {
        check_key(key)?;
        let bytes = serde_json::to_vec_pretty(value).expect("document serializes");
        let hash = hex::encode(Sha256::digest(&bytes));
        self.with_lock(|| {
            let mut index = self.read_index()?;
            let current = index.documents.get(key).filter(|e| !e.tombstoned).map_or(0, |e| e.version);
            if let Some(expected) = expected_version {
                if expected != current {
                    return Err(WorkspaceError::VersionConflict {
                        key: key.to_string(),
                        expected,
                        current,
                    });
                }
            }
            let object = self.object_path(&hash);
            if !object.exists() {
                write_atomic(&object, &bytes)?;
            }
            let entry = index.documents.entry(key.to_string()).or_default();
            if !entry.hash.is_empty() {
                let previous = std::mem::take(&mut entry.hash);
                entry.history.push(previous);
            }
            // Versions keep counting through tombstones so stale writers still conflict.
            entry.version = entry.version.max(current) + 1;
            entry.hash = hash.clone();
            entry.tombstoned = false;
            let version = entry.version;
            self.write_index(&index)?;
            self.append_journal(&JournalEntry {
                at: Utc::now(),
                op: "put",
                key,
                version,
                hash: &hash,
            })?;
            Ok(version)
        })
    }

    /// Read-modify-write with retries on concurrent version conflicts.
    pub fn update<T, R, E>(&self, key: &str, mut f: impl FnMut(&mut T) -> std::result::Result<R, E>) -> std::result::Result<(R, u64), E>
    where
        T: Serialize + DeserializeOwned,
        E: From<WorkspaceError>,
    {
        loop {
            let current: Versioned<T> = self.require(key)?;
            let mut value = current.value;
            let out = f(&mut value)?;
            match self.put(key, &value, Some(current.version)) {
                Ok(version) => return Ok((out, version)),
                Err(WorkspaceError::VersionConflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Tombstones `key`; the content stays in the object store and history.
    pub fn delete(&self, key: &str, expected_version: Option<u64>) -> Result<()> {
        check_key(key)?;
        self.with_lock(|| {
            let mut index = self.read_index()?;
            let entry = index
                .documents
                .get_mut(key)
                .filter(|e| !e.tombstoned)
                .ok_or_else(|| WorkspaceError::NotFound(key.to_string()))?;
            if let Some(expected) = expected_version {
                if expected != entry.version {
                    return Err(WorkspaceError::VersionConflict {
                        key: key.to_string(),
                        expected,
                        current: entry.version,
                    });
                }
            }
            entry.tombstoned = true;
            entry.version += 1;
            let (version, hash) = (entry.version, entry.hash.clone());
            self.write_index(&index)?;
            self.append_journal(&JournalEntry {
                at: Utc::now(),
                op: "delete",
                key,
                version,
                hash: &hash,
            })
        })
    }

    /// Live keys starting with `prefix`, sorted.
    pub fn list(&self, prefix: &str) -> Result<Vec<String>> {
        Ok(self
            .read_index()?
            .documents
            .iter()
            .filter(|(k, e)| !e.tombstoned && k.starts_with(prefix))
            .map(|(k, _)| k.clone())
            .collect())
    }

    pub fn entry(&self, key: &str) -> Result<Option<IndexEntry>> {
        Ok(self.read_index()?.documents.get(key).cloned())
    }

    /// Allocates the next run id (`run-0001`, `run-0002`, ...).
    pub fn next_run_id(&self) -> Result<String> {
        self.with_lock(|| {
            let mut index = self.read_index()?;
            loop {
                index.run_counter += 1;
                let id = format!("run-{:04}", index.run_counter);
                if !index.documents.contains_key(&run_key(&id)) {
                    self.write_index(&index)?;
                    return Ok(id);
                }
            }
        })
    }

    fn cells_path(&self, run_id: &str) -> Result<PathBuf> {
        check_key(run_id)?;
        if run_id.contains('/') {
            return Err(WorkspaceError::InvalidKey(run_id.to_string()));
        }
        Ok(self.root.join("runs").join(format!("{run_id}.cells.jsonl")))
    }

    /// Durably appends one graded cell to the run's cell journal.
    pub fn append_cell(&self, run_id: &str, cell: &GradeCell) -> std::io::Result<()> {
        let path = self.cells_path(run_id).map_err(std::io::Error::other)?;
        let line = serde_json::to_string(cell).map_err(std::io::Error::other)? + "\n";
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        file.write_all(line.as_bytes())?;
        file.sync_data()
    }

    /// Cells journaled for a run. A torn final line from a crash is ignored.
    pub fn journaled_cells(&self, run_id: &str) -> Result<Vec<GradeCell>> {
        let path = self.cells_path(run_id)?;
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut cells = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(cell) => cells.push(cell),
                Err(e) => log::warn!("skipping unreadable journal line in {}: {e}", path.display()),
            }
        }
        Ok(cells)
    }
}

pub fn assignment_key(id: &str) -> String {
    format!("assignments/{id}")
}
pub fn responses_key(assignment_id: &str) -> String {
    format!("responses/{assignment_id}")
}
pub fn labels_key(assignment_id: &str, grader_id: &str) -> String {
    format!("labels/{assignment_id}/{grader_id}")
}
pub fn evaluation_key(assignment_id: &str) -> String {
    format!("evaluation/{assignment_id}")
}
pub fn shots_key(assignment_id: &str) -> String {
    format!("shots/{assignment_id}")
}
pub fn feedback_key(assignment_id: &str) -> String {
    format!("feedback/{assignment_id}")
}
pub fn rules_key(assignment_id: &str) -> String {
    format!("oracle_rules/{assignment_id}")
}
pub fn embeddings_key(assignment_id: &str, backend_id: &str) -> String {
    format!("embeddings/{assignment_id}/{}", backend_id.replace('/', "_"))
}
pub fn run_key(run_id: &str) -> String {
    format!("runs/{run_id}")
}
pub fn report_key(run_id: &str) -> String {
    format!("reports/{run_id}")
}
pub fn reconciliation_key(assignment_id: &str) -> String {
    format!("reconciliation/{assignment_id}")
}
pub fn ablation_key(assignment_id: &str) -> String {
    format!("ablations/{assignment_id}")
}
