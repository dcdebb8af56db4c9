//! Append-only, one-directory-per-session event storage.
//!
//! ```text
//! <root>/sessions/<id>/events.jsonl   one SessionEvent per line
//! <root>/sessions/<id>/meta.json      wall-clock data kept out of the log
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use riarit_core::session::SessionEvent;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed event: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub created_unix_ms: u64,
}

/// A session found on disk.
#[derive(Debug)]
pub struct StoredSession {
    pub id: String,
    pub events: Vec<SessionEvent>,
    pub meta: Option<SessionMeta>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let sessions = root.join("sessions");
        fs::create_dir_all(&sessions).map_err(io_err(&sessions))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    pub fn events_path(&self, id: &str) -> PathBuf {
        self.dir(id).join("events.jsonl")
    }

    /// Appends and syncs; returns once the events are on stable storage.
    pub fn append(&self, id: &str, events: &[SessionEvent]) -> Result<(), StoreError> {
        if events.is_empty() {
            return Ok(());
        }
        let dir = self.dir(id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = self.events_path(id);
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).expect("events serialize");
            buf.push(b'\n');
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.write_all(&buf).map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))
    }

    pub fn write_meta(&self, id: &str, meta: &SessionMeta) -> Result<(), StoreError> {
        let dir = self.dir(id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join("meta.json");
        let mut file = File::create(&path).map_err(io_err(&path))?;
        serde_json::to_writer(&mut file, meta).expect("meta serializes");
        file.sync_data().map_err(io_err(&path))
    }

    /// Reads every session. A torn final line (a write that never completed,
    /// so was never acknowledged) is dropped and cut from the file.
    pub fn load_all(&self) -> Result<Vec<StoredSession>, StoreError> {
        let sessions = self.root.join("sessions");
        let mut ids: Vec<String> = fs::read_dir(&sessions)
            .map_err(io_err(&sessions))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("events.jsonl").is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        ids.into_iter().map(|id| self.load(&id)).collect()
    }

    fn load(&self, id: &str) -> Result<StoredSession, StoreError> {
        let path = self.events_path(id);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut events = Vec::new();
        let mut good_len = 0usize;
        for (n, line) in text.split_inclusive('\n').enumerate() {
            if !line.ends_with('\n') {
                break;
            }
            let event = serde_json::from_str(line.trim_end()).map_err(|e| StoreError::Malformed {
                path: path.display().to_string(),
                line: n + 1,
                message: e.to_string(),
            })?;
            events.push(event);
            good_len += line.len();
        }
        if good_len < text.len() {
            tracing::warn!(session = id, "dropping torn trailing record");
            let file = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
            file.set_len(good_len as u64).map_err(io_err(&path))?;
            file.sync_data().map_err(io_err(&path))?;
        }
        let meta_path = self.dir(id).join("meta.json");
        let meta = fs::read_to_string(&meta_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        Ok(StoredSession {
            id: id.to_string(),
            events,
            meta,
        })
    }
}
