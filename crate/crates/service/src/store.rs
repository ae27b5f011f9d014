//! In-memory sessions with inactivity expiry and an optional append-only
//! log that lets them survive a restart.
//!
//! Each session sits behind its own async mutex, so requests on one session
//! run one after another while different sessions proceed independently.
//! The log holds one JSON record per line: a full snapshot after every
//! change, or an eviction marker. On load the last record per session wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use labrag_core::chat::Session;
use labrag_core::clock::Clock;
use serde::{Deserialize, Serialize};

pub type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogRecord {
    Snapshot { session: Box<Session> },
    Evicted { session_id: String },
}

struct Entry {
    handle: SessionHandle,
    last_active: DateTime<Utc>,
}

pub struct SessionStore {
    sessions: Mutex<HashMap<String, Entry>>,
    ttl: Duration,
    clock: Arc<dyn Clock>,
    log: Option<(PathBuf, Mutex<File>)>,
}

impl SessionStore {
    pub fn new(ttl_secs: u64, clock: Arc<dyn Clock>) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            ttl: Duration::seconds(ttl_secs.min(i64::MAX as u64) as i64),
            clock,
            log: None,
        }
    }

    /// Restore live sessions from `path` (if it exists), rewrite it with just
    /// those, and keep appending to it.
    pub fn with_persistence(ttl_secs: u64, clock: Arc<dyn Clock>, path: &Path) -> std::io::Result<Self> {
        let mut store = Self::new(ttl_secs, clock);
        let restored = if path.exists() { read_log(path)? } else { Vec::new() };
        let now = store.clock.now();
        let live: Vec<Session> = restored
            .into_iter()
            .filter(|s| now - s.updated_at() <= store.ttl)
            .collect();

        let tmp = path.with_extension("compact");
        {
            let mut out = File::create(&tmp)?;
            for s in &live {
                writeln!(
                    out,
                    "{}",
                    to_line(&LogRecord::Snapshot {
                        session: Box::new(s.clone())
                    })
                )?;
            }
            out.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;

        {
            let mut map = store.sessions.lock().expect("store lock poisoned");
            for s in live {
                map.insert(
                    s.session_id().to_string(),
                    Entry {
                        last_active: s.updated_at(),
                        handle: Arc::new(tokio::sync::Mutex::new(s)),
                    },
                );
            }
        }
        let file = OpenOptions::new().append(true).open(path)?;
        store.log = Some((path.to_path_buf(), Mutex::new(file)));
        Ok(store)
    }

    pub fn insert(&self, session: Session) -> SessionHandle {
        self.append(&LogRecord::Snapshot {
            session: Box::new(session.clone()),
        });
        let id = session.session_id().to_string();
        let entry = Entry {
            last_active: session.updated_at(),
            handle: Arc::new(tokio::sync::Mutex::new(session)),
        };
        let handle = entry.handle.clone();
        self.sessions.lock().expect("store lock poisoned").insert(id, entry);
        handle
    }

    /// The session, unless it is unknown or has expired (expired ones are
    /// evicted on the spot).
    pub fn get(&self, session_id: &str) -> Option<SessionHandle> {
        let now = self.clock.now();
        let mut map = self.sessions.lock().expect("store lock poisoned");
        let entry = map.get(session_id)?;
        if now - entry.last_active > self.ttl {
            map.remove(session_id);
            drop(map);
            self.append(&LogRecord::Evicted {
                session_id: session_id.to_string(),
            });
            return None;
        }
        Some(entry.handle.clone())
    }

    /// Record a change to a session held by the caller.
    pub fn save(&self, session: &Session) {
        if let Some(e) = self
            .sessions
            .lock()
            .expect("store lock poisoned")
            .get_mut(session.session_id())
        {
            e.last_active = session.updated_at();
        }
        self.append(&LogRecord::Snapshot {
            session: Box::new(session.clone()),
        });
    }

    /// Evict every expired session; returns how many went.
    pub fn sweep(&self) -> usize {
        let now = self.clock.now();
        let expired: Vec<String> = {
            let mut map = self.sessions.lock().expect("store lock poisoned");
            let ids: Vec<String> = map
                .iter()
                .filter(|(_, e)| now - e.last_active > self.ttl)
                .map(|(id, _)| id.clone())
                .collect();
            for id in &ids {
                map.remove(id);
            }
            ids
        };
        for id in &expired {
            self.append(&LogRecord::Evicted { session_id: id.clone() });
        }
        if !expired.is_empty() {
            tracing::debug!(count = expired.len(), "evicted expired sessions");
        }
        expired.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    fn append(&self, record: &LogRecord) {
        let Some((path, file)) = &self.log else {
            return;
        };
        let line = to_line(record);
        let mut f = file.lock().expect("log lock poisoned");
        if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
            tracing::warn!("could not append to session log {}: {e}", path.display());
        }
    }
}

fn to_line(record: &LogRecord) -> String {
    serde_json::to_string(record).expect("session records serialize")
}

/// Sessions whose last record is a snapshot, in first-seen order.
fn read_log(path: &Path) -> std::io::Result<Vec<Session>> {
    let mut order: Vec<String> = Vec::new();
    let mut latest: HashMap<String, Option<Session>> = HashMap::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, value) = match serde_json::from_str::<LogRecord>(&line) {
            Ok(LogRecord::Snapshot { session }) => (session.session_id().to_string(), Some(*session)),
            Ok(LogRecord::Evicted { session_id }) => (session_id, None),
            Err(e) => {
                // A torn final line after a crash is expected; skip it.
                tracing::warn!("{}:{}: skipping unreadable record: {e}", path.display(), n + 1);
                continue;
            }
        };
        if !latest.contains_key(&id) {
            order.push(id.clone());
        }
        latest.insert(id, value);
    }
    Ok(order
        .into_iter()
        .filter_map(|id| latest.remove(&id).flatten())
        .collect())
}
