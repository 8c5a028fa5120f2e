mod render;

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use viscot_core::eval;
use viscot_core::llm::{
    FixtureStore, GenerationParams, HttpBackend, HttpConfig, RecordingBackend, ReplayBackend, ScriptedBackend,
};
use viscot_core::parser::KeywordTable;
use viscot_core::prompt::Templates;
use viscot_core::session::{self, Engine, Session, SessionError, SessionStore};
use viscot_core::{
    Backend, BackendError, CotParser, GenerationResult, Intervention, NodeId, PromptBuilder, ReasoningGraph,
};
use viscot_service::{AppState, ServeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Http,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Debug, Parser)]
#[command(name = "viscot", version, about = "Interactive chain-of-thought reasoning graphs")]
struct Cli {
    /// Where generations come from.
    #[arg(long, value_enum, default_value = "replay", global = true)]
    backend: BackendKind,
    /// Base URL of an OpenAI-compatible API (http backend).
    #[arg(long, default_value = "http://127.0.0.1:8000/v1", global = true)]
    endpoint: String,
    #[arg(long, default_value = "default", global = true)]
    model: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY", global = true)]
    api_key_env: String,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 120, global = true)]
    timeout: u64,
    #[arg(long, default_value_t = 3, global = true)]
    retries: u32,
    /// Responses for the scripted backend: a JSON array of strings or of
    /// `{"text", "tokens"}` objects.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Fixture directory. Read by the replay backend; other backends record into it.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Directory sessions are saved under.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text", global = true)]
    format: Format,
    /// Regenerate automatically after every intervention.
    #[arg(long, global = true)]
    strict_alg1: bool,
    /// Report failures as JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Directory with system/initial/feedback/zero_shot `.v1.txt` templates.
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// Keyword file for step classification.
    #[arg(long, global = true)]
    keywords: Option<PathBuf>,
    #[arg(long, default_value_t = 1024, global = true)]
    max_tokens: u32,
    #[arg(long, default_value_t = 0.0, global = true)]
    temperature: f64,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Start a session and edit it with commands read from stdin.
    Run { query: String },
    /// Run a suite manifest and write report.json and report.txt.
    Eval {
        manifest: PathBuf,
        #[arg(long, default_value = "eval-report")]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Rebuild a saved session from its events and compare with graph.json.
    Replay { session_dir: PathBuf },
    /// Write a saved session's graph as text, JSON or DOT.
    Export {
        session_dir: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Allowed browser origin; repeat for several, `*` for any.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, kind: "config", message: message.into() }
    }

    fn runtime(kind: &'static str, message: impl Into<String>) -> Self {
        Failure { code: 1, kind, message: message.into() }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let kind = match e {
            SessionError::Backend(BackendError::FixtureMiss { .. }) => "fixture_miss",
            SessionError::Backend(_) => "backend",
            _ => "session",
        };
        Failure::runtime(kind, e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptEntry {
    Text(String),
    Result(GenerationResult),
}

fn scripted(path: &Path) -> Result<ScriptedBackend> {
    let body = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let entries: Vec<ScriptEntry> =
        serde_json::from_str(&body).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(ScriptedBackend::new(entries.into_iter().map(|e| match e {
        ScriptEntry::Text(t) => GenerationResult::text(t),
        ScriptEntry::Result(r) => r,
    })))
}

impl Cli {
    fn engine(&self) -> Result<Engine> {
        let parser = match &self.keywords {
            Some(p) => CotParser::new(KeywordTable::load(p).map_err(|e| Failure::config(e.to_string()))?),
            None => CotParser::default(),
        };
        let prompts = match &self.templates {
            Some(d) => PromptBuilder::new(Templates::load_dir(d).map_err(|e| Failure::config(e.to_string()))?),
            None => PromptBuilder::default(),
        };
        let params = GenerationParams {
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            want_logprobs: true,
            seed: self.seed,
        };
        Ok(Engine::new(parser, prompts, params))
    }

    fn backend(&self) -> Result<Arc<dyn Backend>> {
        let inner: Arc<dyn Backend> = match self.backend {
            BackendKind::Replay => {
                let dir = self.fixtures.as_ref().ok_or_else(|| Failure::config("--backend replay needs --fixtures"))?;
                if !dir.is_dir() {
                    return Err(Failure::config(format!("fixture directory {} does not exist", dir.display())));
                }
                return Ok(Arc::new(ReplayBackend::open(dir)));
            }
            BackendKind::Scripted => {
                let path = self.script.as_ref().ok_or_else(|| Failure::config("--backend scripted needs --script"))?;
                Arc::new(scripted(path)?)
            }
            BackendKind::Http => {
                let url = url::Url::parse(&self.endpoint)
                    .map_err(|e| Failure::config(format!("bad endpoint URL {:?}: {e}", self.endpoint)))?;
                if !matches!(url.scheme(), "http" | "https") || url.host().is_none() {
                    return Err(Failure::config(format!("endpoint {:?} is not an http(s) URL", self.endpoint)));
                }
                Arc::new(HttpBackend::new(HttpConfig {
                    endpoint: self.endpoint.clone(),
                    model: self.model.clone(),
                    api_key_env: Some(self.api_key_env.clone()).filter(|v| !v.is_empty()),
                    timeout: Duration::from_secs(self.timeout),
                    retries: self.retries,
                    ..HttpConfig::default()
                }))
            }
        };
        Ok(match &self.fixtures {
            Some(dir) => Arc::new(RecordingBackend::new(inner, FixtureStore::new(dir))),
            None => inner,
        })
    }

    fn render(&self, graph: &ReasoningGraph) -> String {
        match self.format {
            Format::Text => render::tree(graph),
            Format::Json => graph.to_json_string(),
            Format::Dot => graph.to_dot(),
        }
    }
}

enum Line {
    Do(Intervention),
    Regen,
    Accept,
    Show,
    Help,
    Quit,
}

const HELP: &str = "commands: flag N | prune N | graft N <text> | regen | accept | show | help | quit";

fn parse_line(line: &str) -> std::result::Result<Option<Line>, String> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let rest = rest.trim();
    let node = |s: &str| s.parse::<NodeId>().map_err(|_| format!("not a node id: {s:?}"));
    let parsed = match cmd {
        "flag" => Line::Do(Intervention::Flag { node: node(rest)? }),
        "prune" => Line::Do(Intervention::Prune { node: node(rest)? }),
        "graft" => {
            let (parent, text) = rest.split_once(char::is_whitespace).ok_or("usage: graft N <text>")?;
            Line::Do(Intervention::Graft { parent: node(parent)?, text: text.trim().to_string() })
        }
        "regen" | "regenerate" => Line::Regen,
        "accept" => Line::Accept,
        "show" => Line::Show,
        "help" | "?" => Line::Help,
        "quit" | "exit" => Line::Quit,
        other => return Err(format!("unknown command {other:?}; {HELP}")),
    };
    Ok(Some(parsed))
}

fn save(store: Option<&SessionStore>, session: &Session) -> Result<()> {
    if let Some(store) = store {
        store.save(session).map_err(|e| Failure::runtime("io", e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli, query: &str) -> Result<()> {
    let engine = cli.engine()?;
    let backend = cli.backend()?;
    let store = cli.store.as_ref().map(SessionStore::new);
    let mut session = engine.start_session(query, &*backend)?;
    save(store.as_ref(), &session)?;

    let mut out = std::io::stdout().lock();
    let mut print = |s: &str| {
        let _ = out.write_all(s.as_bytes());
        let _ = out.flush();
    };
    print(&cli.render(&session.graph));

    for line in std::io::stdin().lock().lines() {
        let line = line.map_err(|e| Failure::runtime("io", e.to_string()))?;
        for part in line.split(';') {
            let cmd = match parse_line(part) {
                Ok(Some(cmd)) => cmd,
                Ok(None) => continue,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    continue;
                }
            };
            let outcome = match cmd {
                Line::Do(i) if cli.strict_alg1 => engine.intervene_and_regenerate(&mut session, i, &*backend).map(|_| ()),
                Line::Do(i) => engine.apply_intervention(&mut session, i).map(|_| ()),
                Line::Regen => engine.regenerate(&mut session, &*backend).map(|_| ()),
                Line::Accept => match engine.accept(&mut session) {
                    Ok(answer) => {
                        save(store.as_ref(), &session)?;
                        print(&format!("{answer}\n"));
                        return Ok(());
                    }
                    Err(e) => Err(e),
                },
                Line::Show => {
                    print(&cli.render(&session.graph));
                    continue;
                }
                Line::Help => {
                    eprintln!("{HELP}");
                    continue;
                }
                Line::Quit => return Err(Failure::runtime("session", "quit before accepting an answer")),
            };
            match outcome {
                Ok(()) => {
                    save(store.as_ref(), &session)?;
                    print(&cli.render(&session.graph));
                }
                Err(e) => eprintln!("error: {e}"),
            }
        }
    }
    Err(Failure::runtime("session", "input ended before an answer was accepted"))
}

fn run_eval(cli: &Cli, manifest: &Path, out: &Path, jobs: usize) -> Result<()> {
    let engine = cli.engine()?;
    let tasks = eval::load_suite(manifest).map_err(|e| Failure::config(e.to_string()))?;
    let report = match cli.backend {
        BackendKind::Replay if cli.fixtures.is_none() => eval::run_suite(&tasks, &engine, jobs),
        _ => {
            let backend = cli.backend()?;
            eval::run_suite_with(&tasks, &engine, jobs, |_| backend.clone())
        }
    }
    .map_err(|e| Failure::config(e.to_string()))?;

    std::fs::create_dir_all(out).map_err(|e| Failure::runtime("io", format!("{}: {e}", out.display())))?;
    let text = report.to_text();
    for (name, body) in [("report.json", report.to_json_string()), ("report.txt", text.clone())] {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(|e| Failure::runtime("io", format!("{}: {e}", path.display())))?;
    }
    match cli.format {
        Format::Json => print!("{}", report.to_json_string()),
        _ => print!("{text}"),
    }
    if report.has_errors() {
        return Err(Failure::runtime("eval", format!("{} task(s) errored: {}", report.errored.len(), report.errored.join(", "))));
    }
    Ok(())
}

fn read_graph(dir: &Path) -> Result<(String, ReasoningGraph)> {
    let path = dir.join(session::GRAPH_FILE);
    let body = std::fs::read_to_string(&path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let graph = ReasoningGraph::from_json_str(&body).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok((body, graph))
}

fn replay(cli: &Cli, dir: &Path) -> Result<()> {
    let fixtures = cli.fixtures.as_ref().ok_or_else(|| Failure::config("replay needs --fixtures"))?;
    let events = session::read_events(&dir.join(session::EVENTS_FILE)).map_err(|e| Failure::config(e.to_string()))?;
    let (snapshot, _) = read_graph(dir)?;
    let rebuilt = cli.engine()?.replay(&events, &FixtureStore::new(fixtures))?;
    let bytes = rebuilt.graph.to_json_string();
    if bytes != snapshot {
        return Err(Failure::runtime("mismatch", format!("replayed graph differs from {}", dir.join(session::GRAPH_FILE).display())));
    }
    println!("ok: {} events, {} nodes, graph.json matches", events.len(), rebuilt.graph.len());
    Ok(())
}

fn export(cli: &Cli, dir: &Path, output: Option<&Path>) -> Result<()> {
    let (_, graph) = read_graph(dir)?;
    let body = cli.render(&graph);
    match output {
        Some(path) => std::fs::write(path, body).map_err(|e| Failure::runtime("io", format!("{}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn serve(cli: &Cli, listen: SocketAddr, cors_origins: &[String]) -> Result<()> {
    let state = AppState::new(cli.engine()?, cli.backend()?);
    let config = ServeConfig { addr: listen, cors_origins: cors_origins.to_vec(), store: cli.store.clone() };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime("io", e.to_string()))?;
    rt.block_on(viscot_service::serve(state, config))
        .map_err(|e| Failure::runtime("io", format!("serving on {listen}: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let result = match &cli.command {
        Command::Run { query } => run(&cli, query),
        Command::Eval { manifest, out, jobs } => run_eval(&cli, manifest, out, *jobs),
        Command::Replay { session_dir } => replay(&cli, session_dir),
        Command::Export { session_dir, output } => export(&cli, session_dir, output.as_deref()),
        Command::Serve { listen, cors_origins } => serve(&cli, *listen, cors_origins),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if cli.json_errors {
                eprintln!("{}", serde_json::json!({"error": {"kind": f.kind, "message": f.message, "exit_code": f.code}}));
            } else {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
