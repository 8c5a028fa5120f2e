//! Text-generation backends.
//!
//! [`Backend`] is the single seam between the session engine and a model.
//! Three implementations ship: [`HttpBackend`] for OpenAI-compatible chat
//! completion servers, [`ReplayBackend`] for recorded fixtures keyed by
//! prompt hash, and [`ScriptedBackend`] for queued responses. Every result
//! is checked at the boundary: when tokens are present they must
//! concatenate to the text exactly.

mod fixtures;
mod http;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::parser::TokenLogprob;
use crate::prompt::PromptContext;

pub use fixtures::{Fixture, FixtureStore, FixtureStoreError, RecordingBackend, ReplayBackend};
pub use http::{HttpBackend, HttpConfig};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("no fixture recorded for prompt {hash}")]
    FixtureMiss { hash: String },
    #[error("backend refused the request (HTTP {status}): {message}")]
    QuotaOrAuth { status: u16, message: String },
    #[error("backend rejected the request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("scripted backend has no responses left")]
    ScriptExhausted,
    #[error("recording fixture: {0}")]
    Store(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FinishReason {
    #[default]
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: PromptContext,
    pub max_tokens: u32,
    pub temperature: f64,
    pub want_logprobs: bool,
    pub seed: Option<u64>,
}

/// Sampling settings shared by every request a session makes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub want_logprobs: bool,
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 1024,
            temperature: 0.0,
            want_logprobs: true,
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn request(&self, prompt: PromptContext) -> GenerationRequest {
        GenerationRequest {
            prompt,
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            want_logprobs: self.want_logprobs,
            seed: self.seed,
        }
    }
}

impl GenerationRequest {
    pub fn new(prompt: PromptContext) -> Self {
        GenerationParams::default().request(prompt)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_tokens < 1 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(
                "temperature must be a finite value >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    #[serde(default)]
    pub tokens: Option<Vec<TokenLogprob>>,
    #[serde(default)]
    pub finish_reason: FinishReason,
}

impl GenerationResult {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            tokens: None,
            finish_reason: FinishReason::Stop,
        }
    }

    pub fn with_tokens(tokens: Vec<TokenLogprob>) -> Self {
        Self {
            text: tokens.iter().map(|t| t.token.as_str()).collect(),
            tokens: Some(tokens),
            finish_reason: FinishReason::Stop,
        }
    }

    /// Rejects results whose tokens do not rebuild the text or carry
    /// impossible log-probabilities.
    pub fn validate(&self) -> Result<(), BackendError> {
        let Some(tokens) = &self.tokens else {
            return Ok(());
        };
        let mut rebuilt = String::with_capacity(self.text.len());
        for t in tokens {
            if !(t.logprob <= 0.0) {
                return Err(BackendError::Malformed(format!(
                    "token {:?} has log-probability {}",
                    t.token, t.logprob
                )));
            }
            rebuilt.push_str(&t.token);
        }
        if rebuilt != self.text {
            return Err(BackendError::Malformed(
                "tokens do not concatenate to the generated text".into(),
            ));
        }
        Ok(())
    }
}

pub trait Backend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(request)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(request)
    }
}
