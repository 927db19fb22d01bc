//! `qagrade.toml`: workspace location, grading settings and named backend sections.
//!
//! ```toml
//! workspace = "ws"
//!
//! [grading]
//! workers = 8
//! template = "prompt.txt"
//! general_instruction_file = "instruction.txt"
//! embedding_backend = "embed"
//!
//! [backends.chat]
//! kind = "live_chat"
//! base_url = "https://api.example.com/v1"
//! model_name = "some-model"
//! credentials_ref = "GRADER_API_KEY"
//!
//! [backends.embed]
//! kind = "test_embedding"
//! dimension = 384
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gateway::{BackendConfig, BackendKind};

fn default_workers() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingSettings {
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default)]
    pub general_instruction: Option<String>,
    #[serde(default)]
    pub general_instruction_file: Option<PathBuf>,
    /// Name of the backend section used to embed responses.
    #[serde(default)]
    pub embedding_backend: Option<String>,
}

impl Default for GradingSettings {
    fn default() -> Self {
        GradingSettings {
            workers: default_workers(),
            template: None,
            general_instruction: None,
            general_instruction_file: None,
            embedding_backend: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    #[serde(default)]
    pub workspace: Option<PathBuf>,
    #[serde(default)]
    pub grading: GradingSettings,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("unknown backend `{0}` (define it under [backends.{0}])")]
    UnknownBackend(String),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn resolve_path(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// A named backend section. `oracle` and `test_embedding` work without one.
    pub fn backend(&self, name: &str) -> Result<BackendConfig, ConfigError> {
        if let Some(b) = self.backends.get(name) {
            return Ok(b.clone());
        }
        match name {
            "oracle" => Ok(BackendConfig::oracle()),
            "test_embedding" | "test-embedding" => Ok(BackendConfig::test_embedding(384)),
            _ => Err(ConfigError::UnknownBackend(name.to_string())),
        }
    }

    pub fn embedding_backend(&self) -> Result<BackendConfig, ConfigError> {
        match &self.grading.embedding_backend {
            Some(name) => self.backend(name),
            None => Ok(BackendConfig::new(BackendKind::TestEmbedding)),
        }
    }

    pub fn general_instruction(&self) -> Result<Option<String>, ConfigError> {
        if let Some(text) = &self.grading.general_instruction {
            return Ok(Some(text.clone()));
        }
        match &self.grading.general_instruction_file {
            Some(path) => {
                let path = self.resolve_path(path);
                std::fs::read_to_string(&path)
                    .map(Some)
                    .map_err(|source| ConfigError::Io { path, source })
            }
            None => Ok(None),
        }
    }
}
