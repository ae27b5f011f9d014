//! `labrag.toml`: where the index lives, which providers to use and how the
//! server behaves. Secrets are never read from this file, only the names of
//! the environment variables that hold them.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use labrag_core::chat::{LabAssistant, LlmKind, LlmProviderConfig};
use labrag_core::clock::Clock;
use labrag_core::embedding::EmbeddingProviderConfig;
use labrag_core::index::VectorIndex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SESSION_TTL_SECS: u64 = 30 * 60;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("startup failed: {0}")]
    Startup(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub index_path: PathBuf,
    pub embedding: EmbeddingProviderConfig,
    pub llm: LlmProviderConfig,
    #[serde(default = "default_listen_addr")]
    pub listen_addr: String,
    /// Seconds of inactivity before a session is evicted.
    #[serde(default = "default_ttl")]
    pub session_ttl: u64,
    /// Requests on one session are handled one at a time; only 1 is accepted.
    #[serde(default = "one")]
    pub max_inflight_per_session: usize,
    #[serde(default = "default_log_level")]
    pub log_level: String,
    /// Append-only session log; sessions are kept in memory only when unset.
    #[serde(default)]
    pub persistence_path: Option<PathBuf>,
}

fn default_listen_addr() -> String {
    "127.0.0.1:8080".into()
}

fn default_ttl() -> u64 {
    DEFAULT_SESSION_TTL_SECS
}

fn one() -> usize {
    1
}

fn default_log_level() -> String {
    "info".into()
}

impl AppConfig {
    /// Parse and validate a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: AppConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.index_path);
        if let Some(p) = self.llm.dataset_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.llm.transcript_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.persistence_path.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.session_ttl == 0 {
            return invalid("session_ttl must be positive".into());
        }
        if self.max_inflight_per_session != 1 {
            return invalid(format!(
                "max_inflight_per_session is fixed at 1, got {}",
                self.max_inflight_per_session
            ));
        }
        self.socket_addr()?;
        if !self.index_path.is_file() {
            return invalid(format!("index_path {} does not exist", self.index_path.display()));
        }
        self.llm.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let (LlmKind::Oracle, Some(p)) = (self.llm.kind, &self.llm.dataset_path) {
            if !p.is_file() {
                return invalid(format!("llm.dataset_path {} does not exist", p.display()));
            }
        }
        if let (LlmKind::Replay, Some(p), false) = (self.llm.kind, &self.llm.transcript_path, self.llm.record) {
            if !p.is_file() {
                return invalid(format!("llm.transcript_path {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    pub fn socket_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.listen_addr
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("listen_addr {:?}: {e}", self.listen_addr)))
    }

    /// Load the index and build both providers. Blocking.
    pub fn build_assistant(&self, clock: Arc<dyn Clock>) -> Result<LabAssistant, ConfigError> {
        let startup = |e: String| ConfigError::Startup(e);
        let index =
            VectorIndex::load(&self.index_path).map_err(|e| startup(format!("{}: {e}", self.index_path.display())))?;
        let embedder = self.embedding.build().map_err(|e| startup(e.to_string()))?;
        if embedder.provider_tag() != index.provider_tag() {
            return Err(startup(format!(
                "index was built with {:?} but the configured embedder is {:?}",
                index.provider_tag(),
                embedder.provider_tag()
            )));
        }
        let llm = self.llm.build().map_err(|e| startup(e.to_string()))?;
        LabAssistant::builder(Arc::new(index), embedder, llm)
            .model_name(self.llm.model_name.clone())
            .clock(clock)
            .build()
            .map_err(|e| startup(e.to_string()))
    }
}
