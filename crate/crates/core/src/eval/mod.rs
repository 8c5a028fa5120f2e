//! Scripted, fixture-backed evaluation of the interactive loop against the
//! non-interactive baselines.

mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::answer;
use crate::graph::Intervention;
use crate::llm::{Backend, BackendError, ReplayBackend};
use crate::session::{Engine, SessionError};

pub use report::{format_tenths, ratio_tenths, ModeSummary, SuiteReport, TaskReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Viscot,
    StandardCot,
    ZeroShot,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Viscot, Mode::StandardCot, Mode::ZeroShot];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Viscot => "VISCOT",
            Mode::StandardCot => "STANDARD_COT",
            Mode::ZeroShot => "ZERO_SHOT",
        }
    }

    pub fn is_baseline(self) -> bool {
        self != Mode::Viscot
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One step of a task script. In JSON: `{"intervene": {...}}`,
/// `"regenerate"` or `"accept"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directive {
    Intervene(Intervention),
    Regenerate,
    Accept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTask {
    pub id: String,
    pub query: String,
    pub gold_answer: String,
    /// Fixture directory; relative paths resolve against the task file.
    pub fixtures: PathBuf,
    #[serde(default)]
    pub script: Vec<Directive>,
    pub mode: Mode,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("suite has no tasks")]
    EmptySuite,
    #[error("invalid script: {0}")]
    ScriptInvalid(String),
    #[error("no fixture recorded for prompt {hash}")]
    FixtureMiss { hash: String },
    #[error(transparent)]
    Session(SessionError),
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },
}

impl From<SessionError> for EvalError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Backend(BackendError::FixtureMiss { hash }) => EvalError::FixtureMiss { hash },
            other => EvalError::Session(other),
        }
    }
}

impl From<BackendError> for EvalError {
    fn from(e: BackendError) -> Self {
        SessionError::from(e).into()
    }
}

impl ScriptedTask {
    /// Baselines are non-interactive; an accept, if present, must be last.
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.mode.is_baseline() {
            if let Some(i) = self.script.iter().position(|d| matches!(d, Directive::Intervene(_))) {
                return Err(EvalError::ScriptInvalid(format!(
                    "task {}: intervention at script position {i} in {} mode",
                    self.id, self.mode
                )));
            }
        }
        if let Some(i) = self.script.iter().position(|d| *d == Directive::Accept) {
            if i + 1 != self.script.len() {
                return Err(EvalError::ScriptInvalid(format!(
                    "task {}: directives after accept at position {i}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let load_err = |message: String| EvalError::Load { path: path.to_path_buf(), message };
        let body = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let mut task: ScriptedTask = serde_json::from_str(&body).map_err(|e| load_err(e.to_string()))?;
        if task.fixtures.is_relative() {
            task.fixtures = path.parent().unwrap_or(Path::new(".")).join(&task.fixtures);
        }
        Ok(task)
    }
}

/// Lists task files, relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    #[serde(default)]
    pub name: Option<String>,
    pub tasks: Vec<PathBuf>,
}

pub fn load_suite(manifest: &Path) -> Result<Vec<ScriptedTask>, EvalError> {
    let load_err = |message: String| EvalError::Load { path: manifest.to_path_buf(), message };
    let body = std::fs::read_to_string(manifest).map_err(|e| load_err(e.to_string()))?;
    let parsed: SuiteManifest = serde_json::from_str(&body).map_err(|e| load_err(e.to_string()))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    parsed.tasks.iter().map(|t| ScriptedTask::load(&base.join(t))).collect()
}

fn run_viscot(task: &ScriptedTask, engine: &Engine, backend: &dyn Backend) -> Result<(String, u32), EvalError> {
    let mut session = engine.start_session(&task.query, backend)?;
    for directive in &task.script {
        match directive {
            Directive::Intervene(i) => {
                engine.apply_intervention(&mut session, i.clone())?;
            }
            Directive::Regenerate => {
                engine.regenerate(&mut session, backend)?;
            }
            Directive::Accept => break,
        }
    }
    let answer = engine.accept(&mut session)?;
    Ok((answer, session.intervention_count))
}

fn run_standard(task: &ScriptedTask, engine: &Engine, backend: &dyn Backend) -> Result<String, EvalError> {
    let mut session = engine.start_session(&task.query, backend)?;
    for directive in &task.script {
        if *directive == Directive::Regenerate {
            session = engine.start_session(&task.query, backend)?;
        }
    }
    Ok(engine.accept(&mut session)?)
}

fn run_zero_shot(task: &ScriptedTask, engine: &Engine, backend: &dyn Backend) -> Result<String, EvalError> {
    let prompt = engine.prompts().zero_shot(&task.query).map_err(SessionError::from)?;
    let request = engine.params().request(prompt);
    let mut result = backend.generate(&request)?;
    for directive in &task.script {
        if *directive == Directive::Regenerate {
            result = backend.generate(&request)?;
        }
    }
    answer::extract(&result.text).ok_or(EvalError::Session(SessionError::NoAnswer))
}

/// Runs one task against `backend`, which must resolve every generation
/// the script asks for.
pub fn run_task(task: &ScriptedTask, engine: &Engine, backend: &dyn Backend) -> Result<TaskReport, EvalError> {
    task.validate()?;
    let start = Instant::now();
    let (answer, interventions) = match task.mode {
        Mode::Viscot => run_viscot(task, engine, backend)?,
        Mode::StandardCot => (run_standard(task, engine, backend)?, 0),
        Mode::ZeroShot => (run_zero_shot(task, engine, backend)?, 0),
    };
    let completion_seconds = start.elapsed().as_secs_f64();
    Ok(TaskReport {
        id: task.id.clone(),
        mode: task.mode,
        correct: answer::normalize(&answer) == answer::normalize(&task.gold_answer),
        answer: Some(answer),
        gold_answer: task.gold_answer.clone(),
        interventions,
        completion_seconds,
        error: None,
    })
}

/// Runs every task against a replay backend over its own fixture directory,
/// up to `jobs` at a time. Task failures are recorded, not returned.
pub fn run_suite(tasks: &[ScriptedTask], engine: &Engine, jobs: usize) -> Result<SuiteReport, EvalError> {
    run_suite_with(tasks, engine, jobs, |task| ReplayBackend::open(&task.fixtures))
}

pub fn run_suite_with<B, F>(
    tasks: &[ScriptedTask],
    engine: &Engine,
    jobs: usize,
    backend_for: F,
) -> Result<SuiteReport, EvalError>
where
    B: Backend,
    F: Fn(&ScriptedTask) -> B + Sync,
{
    if tasks.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    let run_one = |task: &ScriptedTask| {
        let backend = backend_for(task);
        run_task(task, engine, &backend).unwrap_or_else(|e| TaskReport::errored(task, e.to_string()))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Load { path: PathBuf::new(), message: e.to_string() })?;
    let reports: Vec<TaskReport> = pool.install(|| tasks.par_iter().map(run_one).collect());
    Ok(SuiteReport::from_tasks(reports))
}
