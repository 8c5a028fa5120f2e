use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Backend, BackendError, FinishReason, GenerationRequest, GenerationResult};
use crate::parser::TokenLogprob;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `http://127.0.0.1:8000/v1`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after the first for transport errors and 5xx replies.
    pub retries: u32,
    pub backoff_base: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout: Duration::from_secs(120),
            retries: 3,
            backoff_base: Duration::from_millis(250),
        }
    }
}

/// Client for `POST {endpoint}/chat/completions`.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    finish_reason: Option<String>,
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    content: Option<Vec<TokenEntry>>,
}

#[derive(Deserialize)]
struct TokenEntry {
    token: String,
    logprob: f64,
}

enum Attempt {
    Done(Result<GenerationResult, BackendError>),
    Retry(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self { config, agent }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    fn body(&self, request: &GenerationRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.prompt.system},
                {"role": "user", "content": request.prompt.rendered},
            ],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "logprobs": request.want_logprobs,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.agent.post(&self.url());
        if let Some(key) = self
            .config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty())
        {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => Attempt::Done(
                resp.into_json::<ChatResponse>()
                    .map_err(|e| BackendError::Malformed(e.to_string()))
                    .and_then(Self::map_response),
            ),
            Err(ureq::Error::Status(status, resp)) => {
                let message = resp.into_string().unwrap_or_default();
                match status {
                    401 | 403 | 429 => Attempt::Done(Err(BackendError::QuotaOrAuth { status, message })),
                    500..=599 => Attempt::Retry(BackendError::Unreachable(format!("HTTP {status}: {message}"))),
                    _ => Attempt::Done(Err(BackendError::Rejected { status, message })),
                }
            }
            Err(ureq::Error::Transport(t)) => Attempt::Retry(BackendError::Unreachable(t.to_string())),
        }
    }

    fn map_response(resp: ChatResponse) -> Result<GenerationResult, BackendError> {
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
        let text = choice.message.content.unwrap_or_default();
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        };
        let tokens = choice
            .logprobs
            .and_then(|l| l.content)
            .map(|entries| {
                entries
                    .into_iter()
                    .map(|e| TokenLogprob::new(e.token, e.logprob))
                    .collect::<Vec<_>>()
            });
        let result = GenerationResult { text, tokens, finish_reason };
        result.validate()?;
        Ok(result)
    }
}

impl Backend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        let body = self.body(request);
        let mut attempt = 0u32;
        loop {
            match self.attempt(&body) {
                Attempt::Done(result) => return result,
                Attempt::Retry(err) if attempt >= self.config.retries => return Err(err),
                Attempt::Retry(_) => {
                    std::thread::sleep(self.config.backoff_base * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::format_initial_prompt;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves one canned `(status, body)` per connection and records the
    /// request bodies.
    fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Value>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(serde_json::from_slice(&buf).unwrap());
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), seen)
    }

    fn backend(endpoint: String, retries: u32) -> HttpBackend {
        HttpBackend::new(HttpConfig {
            endpoint,
            model: "test-model".into(),
            api_key_env: None,
            timeout: Duration::from_secs(5),
            retries,
            backoff_base: Duration::from_millis(1),
        })
    }

    fn request() -> GenerationRequest {
        GenerationRequest::new(format_initial_prompt("q?").unwrap())
    }

    fn ok_body() -> String {
        json!({"choices": [{
            "message": {"role": "assistant", "content": "1. Hi"},
            "finish_reason": "stop",
            "logprobs": {"content": [
                {"token": "1", "logprob": -0.1, "top_logprobs": []},
                {"token": ".", "logprob": -0.2, "top_logprobs": []},
                {"token": " Hi", "logprob": -0.3, "top_logprobs": []}
            ]}
        }]})
        .to_string()
    }

    #[test]
    fn maps_text_and_logprobs() {
        let (url, seen) = mock_server(vec![(200, ok_body())]);
        let out = backend(url, 0).generate(&request()).unwrap();
        assert_eq!(out.text, "1. Hi");
        assert_eq!(out.tokens.unwrap().len(), 3);
        assert_eq!(out.finish_reason, FinishReason::Stop);
        let body = &seen.lock().unwrap()[0];
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["messages"][1]["role"], "user");
        assert_eq!(body["temperature"], 0.0);
    }

    #[test]
    fn auth_and_quota_are_distinct_and_not_retried() {
        let (url, seen) = mock_server(vec![(429, "{}".into()), (200, ok_body())]);
        let err = backend(url, 3).generate(&request()).unwrap_err();
        assert!(matches!(err, BackendError::QuotaOrAuth { status: 429, .. }));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn server_errors_retry_within_budget() {
        let (url, seen) = mock_server(vec![(503, "{}".into()), (502, "{}".into()), (200, ok_body())]);
        assert!(backend(url, 3).generate(&request()).is_ok());
        assert_eq!(seen.lock().unwrap().len(), 3);

        let replies = vec![(500, "{}".to_string()); 3];
        let (url, seen) = mock_server(replies);
        let err = backend(url, 2).generate(&request()).unwrap_err();
        assert!(matches!(err, BackendError::Unreachable(_)));
        assert_eq!(seen.lock().unwrap().len(), 3);
    }

    #[test]
    fn mismatched_tokens_are_malformed() {
        let body = json!({"choices": [{
            "message": {"content": "abc"},
            "finish_reason": "length",
            "logprobs": {"content": [{"token": "ab", "logprob": -0.1}]}
        }]})
        .to_string();
        let (url, _) = mock_server(vec![(200, body)]);
        assert!(matches!(
            backend(url, 0).generate(&request()),
            Err(BackendError::Malformed(_))
        ));
    }

    #[test]
    fn unreachable_endpoint() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = backend(format!("http://{addr}/v1"), 1).generate(&request()).unwrap_err();
        assert!(matches!(err, BackendError::Unreachable(_)));
    }
}
