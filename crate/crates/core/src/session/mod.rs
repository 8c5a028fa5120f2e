//! The interactive loop: generate, structure, intervene, regenerate,
//! accept. Every state change appends an event, and a session can be
//! rebuilt from its events plus the recorded generations.

mod events;
mod store;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::graph::{Applied, GraphError, Intervention, NodeId, ReasoningGraph};
use crate::llm::{Backend, BackendError, FixtureStore, GenerationParams, GenerationResult};
use crate::parser::{CotParser, ParseError, StepSeed};
use crate::prompt::{PromptBuilder, PromptContext, PromptError};

pub use events::{check_log, EventKind, EventPayload, SessionEvent};
pub use store::{events_to_jsonl, read_events, save_dir, SessionMeta, SessionStore, StoreError, EVENTS_FILE, GRAPH_FILE, META_FILE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("session is already accepted")]
    SessionClosed,
    #[error("model output contains no reasoning steps")]
    ParseEmpty,
    #[error(transparent)]
    Parse(ParseError),
    #[error("graph has steps but no frontier to continue from")]
    NoFrontier,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no answer can be extracted")]
    NoAnswer,
    #[error("malformed event log: {0}")]
    MalformedLog(String),
}

impl From<ParseError> for SessionError {
    fn from(e: ParseError) -> Self {
        match e {
            ParseError::EmptyInput => SessionError::ParseEmpty,
            other => SessionError::Parse(other),
        }
    }
}

impl From<PromptError> for SessionError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::EmptyQuery => SessionError::EmptyQuery,
            PromptError::NoFrontier => SessionError::NoFrontier,
            PromptError::Graph(g) => SessionError::Graph(g),
            PromptError::Io { .. } => SessionError::MalformedLog(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    Active,
    Accepted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub query: String,
    pub graph: ReasoningGraph,
    pub events: Vec<SessionEvent>,
    pub status: SessionStatus,
    pub final_answer: Option<String>,
    pub intervention_count: u32,
    pub started_at: DateTime<Utc>,
    pub ended_at: Option<DateTime<Utc>>,
}

impl Session {
    /// Wall-clock time from start to acceptance.
    pub fn completion_seconds(&self) -> Option<f64> {
        self.ended_at
            .map(|end| (end - self.started_at).num_microseconds().unwrap_or(i64::MAX) as f64 / 1e6)
    }

    pub fn is_active(&self) -> bool {
        self.status == SessionStatus::Active
    }

    fn push_event(&mut self, timestamp: DateTime<Utc>, payload: EventPayload) {
        let sequence = self.events.len() as u64;
        self.events.push(SessionEvent { sequence, timestamp, payload });
    }

    fn ensure_active(&self) -> Result<(), SessionError> {
        if self.is_active() {
            Ok(())
        } else {
            Err(SessionError::SessionClosed)
        }
    }
}

fn new_session_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Runs sessions against a backend. Holds the parser, prompt templates and
/// sampling settings; a replay must use an engine configured the same way
/// as the one that recorded the session.
#[derive(Debug, Clone, Default)]
pub struct Engine {
    parser: CotParser,
    prompts: PromptBuilder,
    params: GenerationParams,
}

impl Engine {
    pub fn new(parser: CotParser, prompts: PromptBuilder, params: GenerationParams) -> Self {
        Self { parser, prompts, params }
    }

    pub fn parser(&self) -> &CotParser {
        &self.parser
    }

    pub fn prompts(&self) -> &PromptBuilder {
        &self.prompts
    }

    pub fn params(&self) -> &GenerationParams {
        &self.params
    }

    fn seeds(&self, result: &GenerationResult) -> Result<Vec<StepSeed>, SessionError> {
        let seeds = self.parser.parse(&result.text, result.tokens.as_deref())?;
        if seeds.is_empty() {
            return Err(SessionError::ParseEmpty);
        }
        Ok(seeds)
    }

    /// Hangs parsed steps off the frontier, or starts a fresh chain when the
    /// graph is empty.
    fn grow(&self, graph: &mut ReasoningGraph, seeds: &[StepSeed]) -> Result<Vec<NodeId>, SessionError> {
        if graph.is_empty() {
            return Ok(graph.start_chain(seeds)?);
        }
        let frontier = graph.frontier().ok_or(SessionError::NoFrontier)?;
        Ok(graph.append_chain(frontier, seeds)?)
    }

    /// The prompt the next regeneration would send.
    pub fn next_prompt(&self, session: &Session) -> Result<PromptContext, SessionError> {
        Ok(self
            .prompts
            .feedback(&session.graph, session.graph.frontier(), &session.query)?)
    }

    pub fn start_session(&self, query: &str, backend: &dyn Backend) -> Result<Session, SessionError> {
        let started_at = Utc::now();
        let prompt = self.prompts.initial(query)?;
        let result = backend.generate(&self.params.request(prompt.clone()))?;
        let seeds = self.seeds(&result)?;
        let graph = ReasoningGraph::build_linear(&seeds)?;
        let id = new_session_id();
        let mut session = Session {
            id: id.clone(),
            query: prompt.query.clone(),
            graph,
            events: Vec::new(),
            status: SessionStatus::Active,
            final_answer: None,
            intervention_count: 0,
            started_at,
            ended_at: None,
        };
        session.push_event(started_at, EventPayload::Started { session_id: id, query: prompt.query.clone() });
        session.push_event(
            Utc::now(),
            EventPayload::Generated { prompt_hash: prompt.hash(), steps: seeds.len() },
        );
        Ok(session)
    }

    fn intervene_graph(
        &self,
        graph: &mut ReasoningGraph,
        intervention: &Intervention,
    ) -> Result<Applied, GraphError> {
        match intervention {
            Intervention::Graft { parent, text } => {
                let node_type = self.parser.table().classify(text);
                graph.graft_as(*parent, text, node_type).map(Applied::Grafted)
            }
            other => graph.apply(other),
        }
    }

    pub fn apply_intervention(
        &self,
        session: &mut Session,
        intervention: Intervention,
    ) -> Result<Applied, SessionError> {
        session.ensure_active()?;
        let applied = self.intervene_graph(&mut session.graph, &intervention)?;
        session.intervention_count += 1;
        session.push_event(Utc::now(), EventPayload::Intervened { intervention });
        Ok(applied)
    }

    /// Generates a continuation from the current frontier and appends it.
    /// On error the session is left untouched.
    pub fn regenerate(&self, session: &mut Session, backend: &dyn Backend) -> Result<Vec<NodeId>, SessionError> {
        session.ensure_active()?;
        let prompt = self.next_prompt(session)?;
        let result = backend.generate(&self.params.request(prompt.clone()))?;
        let seeds = self.seeds(&result)?;
        let mut graph = session.graph.clone();
        let added = self.grow(&mut graph, &seeds)?;
        session.graph = graph;
        session.push_event(
            Utc::now(),
            EventPayload::Regenerated { prompt_hash: prompt.hash(), steps: seeds.len() },
        );
        Ok(added)
    }

    /// Intervention immediately followed by regeneration, committed together.
    pub fn intervene_and_regenerate(
        &self,
        session: &mut Session,
        intervention: Intervention,
        backend: &dyn Backend,
    ) -> Result<Applied, SessionError> {
        let mut draft = session.clone();
        let applied = self.apply_intervention(&mut draft, intervention)?;
        self.regenerate(&mut draft, backend)?;
        *session = draft;
        Ok(applied)
    }

    pub fn accept(&self, session: &mut Session) -> Result<String, SessionError> {
        session.ensure_active()?;
        let answer = session
            .graph
            .extract_final_answer()
            .map_err(|_| SessionError::NoAnswer)?;
        let now = Utc::now();
        session.status = SessionStatus::Accepted;
        session.final_answer = Some(answer.clone());
        session.ended_at = Some(now);
        session.push_event(now, EventPayload::Accepted { answer: answer.clone() });
        Ok(answer)
    }

    fn replay_generation(
        &self,
        prompt: &PromptContext,
        recorded_hash: &str,
        recorded_steps: usize,
        fixtures: &FixtureStore,
    ) -> Result<Vec<StepSeed>, SessionError> {
        let hash = prompt.hash();
        if hash != recorded_hash {
            return Err(SessionError::MalformedLog(format!(
                "prompt hash {hash} does not match recorded {recorded_hash}"
            )));
        }
        let fixture = fixtures
            .get(&hash)
            .map_err(|e| SessionError::MalformedLog(e.to_string()))?
            .ok_or(BackendError::FixtureMiss { hash })?;
        let result = fixture.into_result();
        result.validate()?;
        let seeds = self.seeds(&result)?;
        if seeds.len() != recorded_steps {
            return Err(SessionError::MalformedLog(format!(
                "fixture parses to {} steps, log recorded {recorded_steps}",
                seeds.len()
            )));
        }
        Ok(seeds)
    }

    /// Rebuilds a session by folding its event log, reading generations
    /// from `fixtures`. Timestamps and ids come from the log.
    pub fn replay(&self, events: &[SessionEvent], fixtures: &FixtureStore) -> Result<Session, SessionError> {
        check_log(events).map_err(SessionError::MalformedLog)?;
        let malformed = |at: u64, e: &dyn std::fmt::Display| SessionError::MalformedLog(format!("event {at}: {e}"));

        let EventPayload::Started { session_id, query } = &events[0].payload else {
            unreachable!("check_log guarantees STARTED first")
        };
        let mut session = Session {
            id: session_id.clone(),
            query: query.clone(),
            graph: ReasoningGraph::new(),
            events: vec![events[0].clone()],
            status: SessionStatus::Active,
            final_answer: None,
            intervention_count: 0,
            started_at: events[0].timestamp,
            ended_at: None,
        };

        for event in &events[1..] {
            match &event.payload {
                EventPayload::Started { .. } => unreachable!("check_log rejects a second STARTED"),
                EventPayload::Generated { prompt_hash, steps } => {
                    let prompt = self.prompts.initial(&session.query)?;
                    let seeds = self.replay_generation(&prompt, prompt_hash, *steps, fixtures)?;
                    session.graph = ReasoningGraph::build_linear(&seeds)?;
                }
                EventPayload::Intervened { intervention } => {
                    self.intervene_graph(&mut session.graph, intervention)
                        .map_err(|e| malformed(event.sequence, &e))?;
                    session.intervention_count += 1;
                }
                EventPayload::Regenerated { prompt_hash, steps } => {
                    let prompt = self
                        .next_prompt(&session)
                        .map_err(|e| malformed(event.sequence, &e))?;
                    let seeds = self.replay_generation(&prompt, prompt_hash, *steps, fixtures)?;
                    self.grow(&mut session.graph, &seeds)
                        .map_err(|e| malformed(event.sequence, &e))?;
                }
                EventPayload::Accepted { answer } => {
                    let derived = session
                        .graph
                        .extract_final_answer()
                        .map_err(|e| malformed(event.sequence, &e))?;
                    if &derived != answer {
                        return Err(malformed(
                            event.sequence,
                            &format!("answer {derived:?} differs from recorded {answer:?}"),
                        ));
                    }
                    session.status = SessionStatus::Accepted;
                    session.final_answer = Some(derived);
                    session.ended_at = Some(event.timestamp);
                }
            }
            session.events.push(event.clone());
        }
        Ok(session)
    }
}
