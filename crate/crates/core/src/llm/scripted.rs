use std::collections::VecDeque;
use std::sync::Mutex;

use super::{Backend, BackendError, GenerationRequest, GenerationResult};

/// Returns queued responses in order, ignoring the prompt.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<Result<GenerationResult, BackendError>>>,
    seen: Mutex<Vec<GenerationRequest>>,
}

impl ScriptedBackend {
    pub fn new(results: impl IntoIterator<Item = GenerationResult>) -> Self {
        Self {
            queue: Mutex::new(results.into_iter().map(Ok).collect()),
            seen: Mutex::default(),
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(GenerationResult::text))
    }

    pub fn push(&self, result: GenerationResult) {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).push_back(Ok(result));
    }

    /// Queues a failure, returned in turn like any other response.
    pub fn push_error(&self, err: BackendError) {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).push_back(Err(err));
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    /// Requests received so far.
    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.seen.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        self.seen
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.clone());
        let next = self
            .queue
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .ok_or(BackendError::ScriptExhausted)??;
        next.validate()?;
        Ok(next)
    }
}
