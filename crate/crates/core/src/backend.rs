//! Chat-completion backends.
//!
//! [`ChatBackend`] speaks the common chat-completions JSON schema
//! (`POST {endpoint}/chat/completions`) or, in mock mode, answers with a
//! deterministic function of the prompt and never touches the network.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::fnv1a64;
use crate::topics::{is_topic_token, tokenize};
use crate::transport::{HttpTransport, TransportError, UreqTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Assistant, content: content.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend returned HTTP {0}")]
    HttpStatus(u16),
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

/// Anything that can turn a message list into a completion.
pub trait ChatModel: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;
}

impl<T: ChatModel + ?Sized> ChatModel for Arc<T> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).complete(messages)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).complete(messages)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    RemoteHttp,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    /// Extra attempts after a transport failure. HTTP errors are not retried.
    pub retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: String::new(),
            model_id: "mock".into(),
            temperature: 0.0,
            max_tokens: 256,
            timeout_secs: 60.0,
            api_key_env: None,
            retries: 2,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::InvalidConfig(m.into()));
        if self.kind == BackendKind::RemoteHttp {
            if self.endpoint.trim().is_empty() {
                return bad("remote backend requires an endpoint");
            }
            if self.model_id.trim().is_empty() {
                return bad("remote backend requires a model id");
            }
        }
        if !(self.timeout_secs > 0.0) {
            return bad("timeout must be positive");
        }
        if !(self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }
}

pub struct ChatBackend {
    cfg: BackendConfig,
    transport: Arc<dyn HttpTransport>,
}

impl std::fmt::Debug for ChatBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatBackend").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl ChatBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        Self::with_transport(cfg, Arc::new(UreqTransport))
    }

    pub fn with_transport(cfg: BackendConfig, transport: Arc<dyn HttpTransport>) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(Self { cfg, transport })
    }

    pub fn mock() -> Self {
        Self::new(BackendConfig::mock()).expect("default mock config is valid")
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn complete_remote(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let token = match &self.cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let url = format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.cfg.model_id,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let timeout = Duration::from_secs_f64(self.cfg.timeout_secs);

        let mut attempt = 0;
        let resp = loop {
            match self.transport.post_json(&url, token.as_deref(), &body, timeout) {
                Ok(resp) => break resp,
                Err(e) if attempt >= self.cfg.retries => {
                    return Err(match e {
                        TransportError::Timeout => BackendError::Timeout,
                        TransportError::Connect(msg) => BackendError::Unreachable(msg),
                    })
                }
                Err(_) => attempt += 1,
            }
        };
        if !(200..300).contains(&resp.status) {
            return Err(BackendError::HttpStatus(resp.status));
        }
        let parsed: serde_json::Value =
            serde_json::from_str(&resp.body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        parsed
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))
    }
}

impl ChatModel for ChatBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        validate_messages(messages)?;
        match self.cfg.kind {
            BackendKind::Mock => Ok(mock_completion(messages)),
            BackendKind::RemoteHttp => self.complete_remote(messages),
        }
    }
}

fn validate_messages(messages: &[ChatMessage]) -> Result<(), BackendError> {
    let first = messages.first().ok_or_else(|| BackendError::InvalidRequest("no messages".into()))?;
    if first.role == ChatRole::Assistant {
        return Err(BackendError::InvalidRequest("first message must be system or user".into()));
    }
    if messages.iter().any(|m| m.role != ChatRole::Assistant && m.content.trim().is_empty()) {
        return Err(BackendError::InvalidRequest("empty system/user message".into()));
    }
    Ok(())
}

// Markers the mock keys on. They are literal substrings of the shipped
// prompt templates.
pub(crate) const SUMMARY_MARKER: &str = "please summarize the main points";
pub(crate) const PERSONA_MARKER: &str = "extract the personal traits";
pub(crate) const PERSONA_SENTENCE_MARKER: &str = "(no more than 20 words):";
pub(crate) const COT_MARKER: &str = "Think step by step";
pub(crate) const RESPONSE_MARKER: &str = "RESPONSE:";
const INPUT_MARKER: &str = "just said: ";
const MOCK_SEED: u64 = 0x6d6f_636b;

/// The mock backend's answer: a pure function of the concatenated message
/// contents, shaped by which prompt it recognises.
pub fn mock_completion(messages: &[ChatMessage]) -> String {
    let joined = messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
    let tag = format!("{:08x}", fnv1a64(MOCK_SEED, joined.as_bytes()) as u32);

    if joined.contains(SUMMARY_MARKER) {
        let conversation = section(&joined, "Conversation: ", "\n\nBased on the Conversation").unwrap_or(&joined);
        let spoken: Vec<&str> = conversation.lines().map(|l| l.split_once(": ").map_or(l, |(_, text)| text)).collect();
        let words = content_words(&spoken.join("\n"), 8);
        if words.is_empty() {
            return format!("SUMMARY: A short exchange of greetings (mock {tag}).");
        }
        return format!("SUMMARY: They talked about {} (mock {tag}).", words.join(", "));
    }

    if joined.contains(PERSONA_MARKER) {
        let sentence = joined
            .rfind(PERSONA_SENTENCE_MARKER)
            .map(|i| &joined[i + PERSONA_SENTENCE_MARKER.len()..])
            .unwrap_or("")
            .lines()
            .next()
            .unwrap_or("");
        let traits = first_person_clauses(sentence);
        let answer = if traits.is_empty() {
            "NO_TRAIT".to_owned()
        } else {
            format!("Extracted Traits: {}", traits.join(" "))
        };
        if joined.contains(COT_MARKER) {
            return format!("Reasoning: the sentence was inspected for self-descriptions (mock {tag}).\n{answer}");
        }
        return answer;
    }

    if joined.contains(RESPONSE_MARKER) {
        let input = joined
            .rfind(INPUT_MARKER)
            .map(|i| &joined[i + INPUT_MARKER.len()..])
            .and_then(|s| s.lines().next())
            .unwrap_or("");
        let words = content_words(input, 3);
        let memories = section(&joined, "are:\n", "\n\n<USER TRAITS>")
            .map(|s| s.lines().filter(|l| l.starts_with("- ")).count())
            .unwrap_or(0);
        let body = match words.as_slice() {
            [] => "Tell me more about that!".to_owned(),
            [w] => format!("Tell me more about {w}!"),
            ws => format!("Tell me more about {} and {}!", ws[..ws.len() - 1].join(", "), ws[ws.len() - 1]),
        };
        let recall = if memories > 0 { format!(" I remember {memories} things we discussed.") } else { String::new() };
        return format!("RESPONSE: {body}{recall} [{tag}]");
    }

    format!("MOCK {tag}")
}

fn section<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(rest.find(end).map_or(rest, |to| &rest[..to]))
}

/// Distinct topic-like tokens in order of first appearance.
fn content_words(text: &str, limit: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for tok in tokenize(text) {
        if out.len() == limit {
            break;
        }
        if is_topic_token(&tok) && !tok.bytes().any(|b| b.is_ascii_digit()) && !out.contains(&tok) {
            out.push(tok);
        }
    }
    out
}

/// Clauses that read as self-descriptions, at most two.
fn first_person_clauses(sentence: &str) -> Vec<String> {
    sentence
        .split(['.', '!', '?', ';'])
        .map(str::trim)
        .filter(|c| {
            let lower = c.to_lowercase();
            let words = c.split_whitespace().count();
            words >= 3 && (lower.starts_with("i ") || lower.starts_with("i'm ") || lower.starts_with("my "))
        })
        .take(2)
        .map(|c| format!("{c}."))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{ForbiddenTransport, HttpResponse};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn msgs(user: &str) -> Vec<ChatMessage> {
        vec![ChatMessage::system("sys"), ChatMessage::user(user)]
    }

    #[test]
    fn mock_is_deterministic_and_offline() {
        let backend = ChatBackend::with_transport(BackendConfig::mock(), Arc::new(ForbiddenTransport)).unwrap();
        let a = backend.complete(&msgs("hello there")).unwrap();
        let b = backend.complete(&msgs("hello there")).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("MOCK "));
    }

    #[test]
    fn mock_summary_mode_golden() {
        let out = mock_completion(&msgs(
            "Conversation: Ann: I took a swimming lesson\nBo: How was the pool? [1a2b3c4d]\n\nBased on the Conversation, please summarize the main points of the conversation",
        ));
        assert_eq!(out, "SUMMARY: They talked about took, swimming, lesson, pool (mock ae1e7fba).");
    }

    #[test]
    fn mock_persona_mode() {
        let prompt = |s: &str| msgs(&format!("please extract the personal traits who said this sentence (no more than 20 words):{s}"));
        assert_eq!(mock_completion(&prompt("I work as a nurse. It is hot today")), "Extracted Traits: I work as a nurse.");
        assert_eq!(mock_completion(&prompt("That must a been some kind of endeavor.")), "NO_TRAIT");
    }

    #[test]
    fn mock_response_mode() {
        let out = mock_completion(&msgs("<CONTEXT>\nBob just said: I adopted a puppy yesterday\nRESPONSE:"));
        assert!(out.starts_with("RESPONSE: Tell me more about adopted, puppy and yesterday! ["), "{out}");
    }

    #[test]
    fn rejects_bad_message_lists() {
        let backend = ChatBackend::mock();
        assert!(matches!(backend.complete(&[]), Err(BackendError::InvalidRequest(_))));
        assert!(matches!(
            backend.complete(&[ChatMessage::assistant("hi")]),
            Err(BackendError::InvalidRequest(_))
        ));
        assert!(matches!(
            backend.complete(&[ChatMessage::system(" ")]),
            Err(BackendError::InvalidRequest(_))
        ));
    }

    struct Scripted {
        calls: AtomicUsize,
        outcome: Box<dyn Fn(usize) -> Result<HttpResponse, TransportError> + Send + Sync>,
    }

    impl HttpTransport for Scripted {
        fn post_json(
            &self,
            url: &str,
            bearer: Option<&str>,
            body: &serde_json::Value,
            _timeout: Duration,
        ) -> Result<HttpResponse, TransportError> {
            assert_eq!(url, "http://llm.local/v1/chat/completions");
            assert_eq!(bearer, None);
            assert_eq!(body["messages"][1]["role"], "user");
            assert_eq!(body["model"], "m1");
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            (self.outcome)(n)
        }
    }

    fn remote_cfg() -> BackendConfig {
        BackendConfig {
            kind: BackendKind::RemoteHttp,
            endpoint: "http://llm.local/v1/".into(),
            model_id: "m1".into(),
            ..BackendConfig::default()
        }
    }

    fn scripted(f: impl Fn(usize) -> Result<HttpResponse, TransportError> + Send + Sync + 'static) -> Arc<Scripted> {
        Arc::new(Scripted { calls: AtomicUsize::new(0), outcome: Box::new(f) })
    }

    #[test]
    fn remote_parses_first_choice() {
        let t = scripted(|_| {
            Ok(HttpResponse { status: 200, body: r#"{"choices":[{"message":{"role":"assistant","content":"hey"}}]}"#.into() })
        });
        let b = ChatBackend::with_transport(remote_cfg(), t.clone()).unwrap();
        assert_eq!(b.complete(&msgs("hi")).unwrap(), "hey");
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn retries_transport_errors_up_to_limit() {
        let t = scripted(|_| Err(TransportError::Timeout));
        let b = ChatBackend::with_transport(remote_cfg(), t.clone()).unwrap();
        assert_eq!(b.complete(&msgs("hi")).unwrap_err(), BackendError::Timeout);
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn recovers_after_transient_failure() {
        let t = scripted(|n| {
            if n == 0 {
                Err(TransportError::Connect("reset".into()))
            } else {
                Ok(HttpResponse { status: 200, body: r#"{"choices":[{"message":{"content":"ok"}}]}"#.into() })
            }
        });
        let b = ChatBackend::with_transport(remote_cfg(), t.clone()).unwrap();
        assert_eq!(b.complete(&msgs("hi")).unwrap(), "ok");
        assert_eq!(t.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn never_retries_client_errors() {
        let t = scripted(|_| Ok(HttpResponse { status: 400, body: "bad".into() }));
        let b = ChatBackend::with_transport(remote_cfg(), t.clone()).unwrap();
        assert_eq!(b.complete(&msgs("hi")).unwrap_err(), BackendError::HttpStatus(400));
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn malformed_body() {
        let t = scripted(|_| Ok(HttpResponse { status: 200, body: r#"{"choices":[]}"#.into() }));
        let b = ChatBackend::with_transport(remote_cfg(), t).unwrap();
        assert!(matches!(b.complete(&msgs("hi")), Err(BackendError::MalformedResponse(_))));
    }

    #[test]
    fn missing_api_key() {
        let cfg = BackendConfig { api_key_env: Some("LONGDIAL_TEST_SURELY_UNSET_KEY".into()), ..remote_cfg() };
        let b = ChatBackend::with_transport(cfg, Arc::new(ForbiddenTransport)).unwrap();
        assert_eq!(
            b.complete(&msgs("hi")).unwrap_err(),
            BackendError::MissingApiKey("LONGDIAL_TEST_SURELY_UNSET_KEY".into())
        );
    }

    #[test]
    fn unreachable_endpoint_fails_without_hanging() {
        let cfg = BackendConfig {
            endpoint: "http://127.0.0.1:9".into(),
            timeout_secs: 2.0,
            retries: 1,
            ..remote_cfg()
        };
        let err = ChatBackend::new(cfg).unwrap().complete(&msgs("hi")).unwrap_err();
        assert!(matches!(err, BackendError::Timeout | BackendError::Unreachable(_)), "{err:?}");
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig { endpoint: String::new(), ..remote_cfg() }.validate().is_err());
        assert!(BackendConfig { timeout_secs: 0.0, ..BackendConfig::mock() }.validate().is_err());
        assert!(BackendConfig::mock().validate().is_ok());
    }
}
