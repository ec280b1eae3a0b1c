//! On-disk layout: `sessions/<id>.json` holds the latest state snapshot and
//! `transcripts/<id>.jsonl` the transcript. Both are replaced atomically after every step.

use std::path::{Path, PathBuf};

use mind_core::transcript::{write_atomic, Transcript};
use mind_core::{SessionId, SessionState};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: corrupt snapshot: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let store = SessionStore { root: root.into() };
        for dir in [store.sessions_dir(), store.transcripts_dir()] {
            std::fs::create_dir_all(&dir).map_err(|e| StoreError::Io { path: dir.clone(), message: e.to_string() })?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn transcripts_dir(&self) -> PathBuf {
        self.root.join("transcripts")
    }

    pub fn snapshot_path(&self, id: &SessionId) -> PathBuf {
        self.sessions_dir().join(format!("{id}.json"))
    }

    pub fn transcript_path(&self, id: &SessionId) -> PathBuf {
        self.transcripts_dir().join(format!("{id}.jsonl"))
    }

    /// Writes the snapshot, then the transcript regenerated from it.
    pub fn save(&self, state: &SessionState, template_set: &str, model: &str) -> Result<(), StoreError> {
        let path = self.snapshot_path(&state.id);
        let bytes = serde_json::to_vec_pretty(state).expect("session state serializes");
        write_atomic(&path, &bytes).map_err(|e| StoreError::Io { path: path.clone(), message: e.to_string() })?;
        let tpath = self.transcript_path(&state.id);
        Transcript::for_session(state, template_set, model)
            .write(&tpath)
            .map_err(|e| StoreError::Io { path: tpath, message: e.to_string() })
    }

    /// Every persisted session, sorted by creation time then id.
    pub fn load_all(&self) -> Result<Vec<SessionState>, StoreError> {
        let dir = self.sessions_dir();
        let entries = std::fs::read_dir(&dir).map_err(|e| StoreError::Io { path: dir.clone(), message: e.to_string() })?;
        let mut out = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| StoreError::Io { path: dir.clone(), message: e.to_string() })?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| StoreError::Io { path: path.clone(), message: e.to_string() })?;
            let state: SessionState =
                serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { path: path.clone(), message: e.to_string() })?;
            out.push(state);
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.as_str().cmp(b.id.as_str())));
        Ok(out)
    }
}
