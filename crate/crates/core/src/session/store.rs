use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Session, SessionEvent, SessionStatus};
use crate::graph::json::SchemaError;
use crate::graph::ReasoningGraph;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Event {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Meta {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Graph {
        path: PathBuf,
        #[source]
        source: SchemaError,
    },
}

/// Summary written next to the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub query: String,
    pub status: SessionStatus,
    pub final_answer: Option<String>,
    pub intervention_count: u32,
    pub started_at: DateTime<Utc>,
    pub ended_at: Option<DateTime<Utc>>,
    pub completion_seconds: Option<f64>,
}

impl From<&Session> for SessionMeta {
    fn from(s: &Session) -> Self {
        SessionMeta {
            id: s.id.clone(),
            query: s.query.clone(),
            status: s.status,
            final_answer: s.final_answer.clone(),
            intervention_count: s.intervention_count,
            started_at: s.started_at,
            ended_at: s.ended_at,
            completion_seconds: s.completion_seconds(),
        }
    }
}

/// One directory per session under `root`, holding `events.jsonl`,
/// `graph.json` and `meta.json`.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

pub const EVENTS_FILE: &str = "events.jsonl";
pub const GRAPH_FILE: &str = "graph.json";
pub const META_FILE: &str = "meta.json";

fn write_atomic(path: &Path, body: &[u8]) -> Result<(), StoreError> {
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut file = std::fs::File::create(&tmp).map_err(io)?;
    file.write_all(body).map_err(io)?;
    file.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn read_events(path: &Path) -> Result<Vec<SessionEvent>, StoreError> {
    let body = std::fs::read_to_string(path).map_err(|source| StoreError::Io { path: path.into(), source })?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| StoreError::Event { path: path.into(), line: i + 1, source })
        })
        .collect()
}

pub fn events_to_jsonl(events: &[SessionEvent]) -> String {
    events.iter().map(|e| e.to_json_line() + "\n").collect()
}

/// Writes `events.jsonl`, `graph.json` and `meta.json` into `dir`.
pub fn save_dir(dir: &Path, session: &Session) -> Result<(), StoreError> {
    write_atomic(&dir.join(EVENTS_FILE), events_to_jsonl(&session.events).as_bytes())?;
    write_atomic(&dir.join(GRAPH_FILE), session.graph.to_json_string().as_bytes())?;
    let mut meta = serde_json::to_string_pretty(&SessionMeta::from(session)).expect("meta serializes");
    meta.push('\n');
    write_atomic(&dir.join(META_FILE), meta.as_bytes())
}

impl SessionStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir_for(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    /// Writes all three files for `session`, replacing earlier versions.
    pub fn save(&self, session: &Session) -> Result<PathBuf, StoreError> {
        let dir = self.dir_for(&session.id);
        save_dir(&dir, session)?;
        Ok(dir)
    }

    pub fn load_events(&self, id: &str) -> Result<Vec<SessionEvent>, StoreError> {
        read_events(&self.dir_for(id).join(EVENTS_FILE))
    }

    pub fn load_graph(&self, id: &str) -> Result<ReasoningGraph, StoreError> {
        let path = self.dir_for(id).join(GRAPH_FILE);
        let body = std::fs::read_to_string(&path).map_err(|source| StoreError::Io { path: path.clone(), source })?;
        ReasoningGraph::from_json_str(&body).map_err(|source| StoreError::Graph { path, source })
    }

    pub fn load_meta(&self, id: &str) -> Result<SessionMeta, StoreError> {
        let path = self.dir_for(id).join(META_FILE);
        let body = std::fs::read_to_string(&path).map_err(|source| StoreError::Io { path: path.clone(), source })?;
        serde_json::from_str(&body).map_err(|source| StoreError::Meta { path, source })
    }

    /// Ids of stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(StoreError::Io { path: self.root.clone(), source }),
        };
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().join(EVENTS_FILE).is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }
}
