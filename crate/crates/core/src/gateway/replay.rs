use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::{check_prompt, prompt_hash, CompletionBackend, CompletionRecord, CompletionRequest, GatewayError, Result};

/// Directory of recorded completions, one `<prompt_hash>.txt` file per prompt.
#[derive(Debug, Clone)]
pub struct ReplayStore {
    dir: PathBuf,
}

impl ReplayStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(ReplayStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record(&self, prompt: &str, response: &str) -> Result<String> {
        let hash = prompt_hash(prompt);
        self.record_hash(&hash, response)?;
        Ok(hash)
    }

    pub fn record_hash(&self, hash: &str, response: &str) -> Result<()> {
        let path = self.dir.join(format!("{hash}.txt"));
        let tmp = self.dir.join(format!(".{hash}.tmp"));
        std::fs::write(&tmp, response)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    fn load(&self) -> Result<HashMap<String, String>> {
        let mut entries = HashMap::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                entries.insert(stem.to_string(), std::fs::read_to_string(&path)?);
            }
        }
        Ok(entries)
    }
}

/// Returns recorded text for known prompt digests and fails loudly otherwise.
pub struct ReplayBackend {
    entries: HashMap<String, String>,
    calls: AtomicUsize,
}

impl ReplayBackend {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(GatewayError::Config(format!("replay directory {} does not exist", dir.display())));
        }
        Ok(Self::from_entries(ReplayStore { dir }.load()?))
    }

    pub fn from_entries(entries: HashMap<String, String>) -> Self {
        ReplayBackend {
            entries,
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `complete` calls made so far, including misses.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for ReplayBackend {
    fn backend_id(&self) -> String {
        "replay".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        check_prompt(request)?;
        let started = Instant::now();
        let hash = prompt_hash(&request.prompt);
        let text = self
            .entries
            .get(&hash)
            .cloned()
            .ok_or(GatewayError::MissingRecording(hash))?;
        Ok(CompletionRecord::new(&request.prompt, text, started.elapsed(), 1, "replay"))
    }
}

/// Wraps another backend and records every successful completion into a store.
pub struct Recorder<B> {
    inner: B,
    store: ReplayStore,
    lock: Mutex<()>,
}

impl<B: CompletionBackend> Recorder<B> {
    pub fn new(inner: B, store: ReplayStore) -> Self {
        Recorder {
            inner,
            store,
            lock: Mutex::new(()),
        }
    }
}

impl<B: CompletionBackend> CompletionBackend for Recorder<B> {
    fn backend_id(&self) -> String {
        self.inner.backend_id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord> {
        let record = self.inner.complete(request)?;
        let _guard = self.lock.lock().expect("recorder poisoned");
        self.store.record_hash(&record.prompt_hash, &record.raw_text)?;
        Ok(record)
    }
}
