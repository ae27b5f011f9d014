mod oracle;
mod remote;
mod replay;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use oracle::OracleProvider;
pub use remote::RemoteChatProvider;
pub use replay::{ReplayProvider, TranscriptRecord};

use super::{LlmError, LlmProvider};
use crate::eval::LabDataset;

pub const DEFAULT_CHAT_MODEL: &str = "gpt-4-turbo";
pub const DEFAULT_CHAT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_CHAT_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlmKind {
    RemoteChat,
    Oracle,
    Replay,
}

impl LlmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LlmKind::RemoteChat => "remote-chat",
            LlmKind::Oracle => "oracle",
            LlmKind::Replay => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmProviderConfig {
    pub kind: LlmKind,
    #[serde(default = "default_model")]
    pub model_name: String,
    /// Must be 0.0; present so config files can state it explicitly.
    #[serde(default)]
    pub temperature: f64,
    /// Replay: the recorded transcript.
    #[serde(default)]
    pub transcript_path: Option<PathBuf>,
    /// Replay: call the remote model on a miss and append the result.
    #[serde(default)]
    pub record: bool,
    /// Oracle: the ground-truth dataset it answers from.
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
}

fn default_model() -> String {
    DEFAULT_CHAT_MODEL.into()
}

fn default_max_inflight() -> usize {
    4
}

impl LlmProviderConfig {
    pub fn new(kind: LlmKind) -> Self {
        Self {
            kind,
            model_name: default_model(),
            temperature: 0.0,
            transcript_path: None,
            record: false,
            dataset_path: None,
            endpoint_url: None,
            api_key_env: None,
            max_inflight: default_max_inflight(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature != 0.0 {
            return Err(LlmError::Config(format!(
                "temperature must be 0.0, got {}",
                self.temperature
            )));
        }
        match self.kind {
            LlmKind::Oracle if self.dataset_path.is_none() => {
                Err(LlmError::Config("oracle provider needs dataset_path".into()))
            }
            LlmKind::Replay if self.transcript_path.is_none() => {
                Err(LlmError::Config("replay provider needs transcript_path".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn LlmProvider>, LlmError> {
        self.validate()?;
        match self.kind {
            LlmKind::Oracle => {
                let path = self.dataset_path.as_ref().expect("validated");
                let dataset = LabDataset::load(path).map_err(|e| LlmError::Config(e.to_string()))?;
                Ok(Arc::new(OracleProvider::from_dataset(&dataset)))
            }
            LlmKind::RemoteChat => Ok(Arc::new(self.remote()?)),
            LlmKind::Replay => {
                let path = self.transcript_path.as_ref().expect("validated");
                if self.record {
                    Ok(Arc::new(ReplayProvider::record(path, Arc::new(self.remote()?))?))
                } else {
                    Ok(Arc::new(ReplayProvider::open(path)?))
                }
            }
        }
    }

    fn remote(&self) -> Result<RemoteChatProvider, LlmError> {
        let key_env = self.api_key_env.as_deref().unwrap_or(DEFAULT_CHAT_KEY_ENV);
        let key = std::env::var(key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| LlmError::Auth(format!("environment variable {key_env} is not set")))?;
        RemoteChatProvider::new(
            self.endpoint_url.as_deref().unwrap_or(DEFAULT_CHAT_ENDPOINT),
            key,
            self.max_inflight,
        )
    }
}
