//! Recorded model responses keyed by prompt hash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::chat::{ChatRequest, LlmError, LlmProvider};

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptRecord {
    pub prompt_sha256: String,
    pub response: String,
}

/// Replays a JSON Lines transcript of `{prompt_sha256, response}` records.
/// When a hash appears more than once the last record wins.
///
/// In strict mode an unknown prompt is [`LlmError::MissingRecording`]. In
/// record mode the inner provider is called instead and the new pair is
/// appended to the transcript.
pub struct ReplayProvider {
    path: PathBuf,
    recordings: Mutex<HashMap<String, String>>,
    recorder: Option<(Arc<dyn LlmProvider>, Mutex<File>)>,
}

impl ReplayProvider {
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        Ok(Self {
            path: path.to_path_buf(),
            recordings: Mutex::new(load(path)?),
            recorder: None,
        })
    }

    pub fn record(path: &Path, inner: Arc<dyn LlmProvider>) -> Result<Self, LlmError> {
        let recordings = if path.exists() { load(path)? } else { HashMap::new() };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: path.to_path_buf(),
            recordings: Mutex::new(recordings),
            recorder: Some((inner, Mutex::new(file))),
        })
    }

    pub fn len(&self) -> usize {
        self.recordings.lock().expect("replay lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn load(path: &Path) -> Result<HashMap<String, String>, LlmError> {
    let file = File::open(path).map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LlmError::Transcript(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TranscriptRecord = serde_json::from_str(&line)
            .map_err(|e| LlmError::Transcript(format!("{} line {}: {e}", path.display(), i + 1)))?;
        map.insert(rec.prompt_sha256, rec.response);
    }
    Ok(map)
}

impl LlmProvider for ReplayProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let key = request.prompt_sha256();
        if let Some(r) = self.recordings.lock().expect("replay lock poisoned").get(&key) {
            return Ok(r.clone());
        }
        let Some((inner, file)) = &self.recorder else {
            return Err(LlmError::MissingRecording { prompt_sha256: key });
        };
        let response = inner.complete(request)?;
        let line = serde_json::to_string(&TranscriptRecord {
            prompt_sha256: key.clone(),
            response: response.clone(),
        })
        .map_err(|e| LlmError::Transcript(e.to_string()))?;
        {
            let mut f = file.lock().expect("replay lock poisoned");
            writeln!(f, "{line}")
                .and_then(|_| f.flush())
                .map_err(|e| LlmError::Transcript(e.to_string()))?;
        }
        self.recordings
            .lock()
            .expect("replay lock poisoned")
            .insert(key, response.clone());
        Ok(response)
    }

    fn kind(&self) -> &'static str {
        "replay"
    }
}
