use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, FinishReason, GenerationRequest, GenerationResult};
use crate::parser::TokenLogprob;
use crate::prompt::PromptContext;

#[derive(Debug, thiserror::Error)]
pub enum FixtureStoreError {
    #[error("writing fixture {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("reading fixture {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture {path} is not valid JSON: {source}")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// On-disk record of one generation, stored as `{request_hash}.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub request_hash: String,
    pub text: String,
    pub tokens: Option<Vec<TokenLogprob>>,
    pub finish_reason: FinishReason,
}

impl Fixture {
    pub fn into_result(self) -> GenerationResult {
        GenerationResult {
            text: self.text,
            tokens: self.tokens,
            finish_reason: self.finish_reason,
        }
    }
}

/// Directory of fixtures keyed by prompt hash. Reads run concurrently;
/// writes are serialized and land atomically via rename.
#[derive(Debug)]
pub struct FixtureStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    /// Persists `result` under the prompt's hash. A later record for the
    /// same prompt replaces the earlier one.
    pub fn record_fixture(
        &self,
        prompt: &PromptContext,
        result: &GenerationResult,
    ) -> Result<(), FixtureStoreError> {
        let hash = prompt.hash();
        let fixture = Fixture {
            request_hash: hash.clone(),
            text: result.text.clone(),
            tokens: result.tokens.clone(),
            finish_reason: result.finish_reason,
        };
        let mut body = serde_json::to_string_pretty(&fixture).expect("fixture serializes");
        body.push('\n');

        let path = self.path_for(&hash);
        let write_err = |source| FixtureStoreError::Write { path: path.clone(), source };
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        std::fs::create_dir_all(&self.dir).map_err(write_err)?;
        let tmp = self.dir.join(format!(".{hash}.json.tmp"));
        let mut file = std::fs::File::create(&tmp).map_err(write_err)?;
        file.write_all(body.as_bytes()).map_err(write_err)?;
        file.sync_all().map_err(write_err)?;
        std::fs::rename(&tmp, &path).map_err(write_err)?;
        Ok(())
    }

    pub fn get(&self, hash: &str) -> Result<Option<Fixture>, FixtureStoreError> {
        let path = self.path_for(hash);
        let body = match std::fs::read_to_string(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(FixtureStoreError::Read { path, source }),
        };
        serde_json::from_str(&body)
            .map(Some)
            .map_err(|source| FixtureStoreError::Corrupt { path, source })
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.path_for(hash).is_file()
    }
}

/// Answers each request with the fixture recorded for its prompt.
#[derive(Debug)]
pub struct ReplayBackend {
    store: FixtureStore,
}

impl ReplayBackend {
    pub fn new(store: FixtureStore) -> Self {
        Self { store }
    }

    pub fn open(dir: impl Into<PathBuf>) -> Self {
        Self::new(FixtureStore::new(dir))
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }
}

impl Backend for ReplayBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        let hash = request.prompt.hash();
        let fixture = self
            .store
            .get(&hash)
            .map_err(|e| BackendError::Malformed(e.to_string()))?
            .ok_or(BackendError::FixtureMiss { hash })?;
        let result = fixture.into_result();
        result.validate()?;
        Ok(result)
    }
}

/// Passes requests to `inner` and records every successful result.
pub struct RecordingBackend<B> {
    inner: B,
    store: FixtureStore,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, store: FixtureStore) -> Self {
        Self { inner, store }
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        let result = self.inner.generate(request)?;
        self.store
            .record_fixture(&request.prompt, &result)
            .map_err(|e| BackendError::Store(e.to_string()))?;
        Ok(result)
    }
}
