use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::graph::Intervention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Started,
    Generated,
    Intervened,
    Regenerated,
    Accepted,
}

/// Kind-specific event data. Generations are recorded by prompt hash and
/// step count; the text itself lives in the fixture store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventPayload {
    Started { session_id: String, query: String },
    Generated { prompt_hash: String, steps: usize },
    Intervened { intervention: Intervention },
    Regenerated { prompt_hash: String, steps: usize },
    Accepted { answer: String },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::Started { .. } => EventKind::Started,
            EventPayload::Generated { .. } => EventKind::Generated,
            EventPayload::Intervened { .. } => EventKind::Intervened,
            EventPayload::Regenerated { .. } => EventKind::Regenerated,
            EventPayload::Accepted { .. } => EventKind::Accepted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub sequence: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl SessionEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

/// Checks the shape of a log: contiguous sequence numbers from 0, a single
/// leading STARTED, a GENERATED right after it, and ACCEPTED only last.
pub fn check_log(events: &[SessionEvent]) -> Result<(), String> {
    let Some(first) = events.first() else {
        return Err("log is empty".into());
    };
    if first.kind() != EventKind::Started {
        return Err("log does not begin with STARTED".into());
    }
    if events.get(1).is_some_and(|e| e.kind() != EventKind::Generated) {
        return Err("STARTED is not followed by GENERATED".into());
    }
    for (i, e) in events.iter().enumerate() {
        if e.sequence != i as u64 {
            return Err(format!("expected sequence {i}, found {}", e.sequence));
        }
        match e.kind() {
            EventKind::Started if i != 0 => return Err(format!("second STARTED at {i}")),
            EventKind::Generated if i != 1 => return Err(format!("GENERATED at {i}")),
            EventKind::Accepted if i + 1 != events.len() => {
                return Err(format!("ACCEPTED at {i} is not the last event"))
            }
            _ => {}
        }
    }
    Ok(())
}
