#![allow(dead_code)]

pub mod banks;
pub mod golden;
pub mod oracle;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use longdial::backend::{BackendError, ChatBackend, ChatMessage, ChatModel};
use longdial::corpus::{MultiSessionDialogue, Session, Turn, CORPUS_VERSION};
use longdial::embedding::{EmbeddingError, EmbeddingVector, HashingEncoder, TextEncoder};
use longdial::transport::ForbiddenTransport;
use longdial::{AgentRuntime, BackendConfig};

/// Encoder returning preset vectors for known texts.
pub struct FixedEncoder {
    pub dim: usize,
    pub table: HashMap<String, EmbeddingVector>,
}

impl FixedEncoder {
    pub fn single(text: &str, v: EmbeddingVector) -> Self {
        Self { dim: v.dim(), table: HashMap::from([(text.to_owned(), v)]) }
    }
}

impl TextEncoder for FixedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        self.table.get(text).cloned().ok_or(EmbeddingError::EmptyText)
    }
}

/// Wraps a model and records every message list it receives.
pub struct RecordingModel<M> {
    pub inner: M,
    pub calls: Mutex<Vec<Vec<ChatMessage>>>,
}

impl<M> RecordingModel<M> {
    pub fn new(inner: M) -> Self {
        Self { inner, calls: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<Vec<ChatMessage>> {
        self.calls.lock().unwrap().clone()
    }

    /// User texts of response-generation prompts.
    pub fn response_prompts(&self) -> Vec<(String, String)> {
        self.calls()
            .into_iter()
            .filter(|m| m[1].content.ends_with("RESPONSE:"))
            .map(|m| (m[0].content.clone(), m[1].content.clone()))
            .collect()
    }
}

impl<M: ChatModel> ChatModel for RecordingModel<M> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        self.calls.lock().unwrap().push(messages.to_vec());
        self.inner.complete(messages)
    }
}

/// Always answers with the same text.
pub struct Fixed(pub String);

impl ChatModel for Fixed {
    fn complete(&self, _: &[ChatMessage]) -> Result<String, BackendError> {
        Ok(self.0.clone())
    }
}

/// Mock backend wired to a transport that panics on use.
pub fn offline_mock() -> ChatBackend {
    ChatBackend::with_transport(BackendConfig::mock(), Arc::new(ForbiddenTransport)).unwrap()
}

pub fn offline_runtime(model: Arc<dyn ChatModel>) -> AgentRuntime {
    AgentRuntime::new(model, Arc::new(HashingEncoder::new(256)))
}

pub fn unit(values: &[f64]) -> EmbeddingVector {
    EmbeddingVector::normalized(values.to_vec()).unwrap()
}

const HOBBIES: [(&str, &str, &str); 10] = [
    ("swimming", "pool", "coach"),
    ("gardening", "tomatoes", "greenhouse"),
    ("painting", "canvas", "watercolors"),
    ("cycling", "bike", "trail"),
    ("baking", "sourdough", "oven"),
    ("chess", "tournament", "openings"),
    ("guitar", "chords", "band"),
    ("hiking", "mountains", "boots"),
    ("photography", "camera", "lens"),
    ("running", "marathon", "sneakers"),
];

const USERS: [&str; 10] = ["Ann", "Ben", "Cleo", "Dev", "Eli", "Fay", "Gus", "Hana", "Ivo", "Jun"];

fn turn(speaker: &str, text: String) -> Turn {
    Turn { speaker: speaker.into(), text }
}

/// Ten five-session dialogues. Each user keeps returning to one hobby so
/// later sessions can draw on earlier ones.
pub fn fixture_corpus() -> Vec<MultiSessionDialogue> {
    (0..10)
        .map(|i| {
            let (hobby, place, thing) = HOBBIES[i];
            let user = USERS[i];
            let agent = "Sam";
            let mut sessions = vec![Session {
                gap_before: 0,
                turns: vec![
                    turn(user, format!("Hi! I just started {hobby} and I spend weekends at the {place}.")),
                    turn(agent, format!("That sounds wonderful. I love {hobby} too. I work as a librarian.")),
                    turn(user, format!("My friend gave me a new {thing} for it.")),
                    turn(agent, format!("A new {thing} will help a lot with {hobby}.")),
                ],
            }];
            for s in 2..=5u64 {
                sessions.push(Session {
                    gap_before: 86_400 * (s + i as u64 % 3),
                    turns: vec![
                        turn(user, format!("I went back to the {place} for more {hobby} this week.")),
                        turn(agent, format!("How did the {hobby} go at the {place} this time?")),
                        turn(user, format!("I think the {thing} made it easier, session {s} was fun.")),
                        turn(agent, format!("I am glad the {thing} helps. Tell me about session {s}.")),
                        turn(user, format!("I am planning to invite my sister next time.")),
                        turn(agent, format!("Inviting your sister to {hobby} is a lovely idea.")),
                    ],
                });
            }
            MultiSessionDialogue {
                version: CORPUS_VERSION,
                dialogue_id: format!("fixture-{i:02}"),
                speakers: (user.into(), agent.into()),
                sessions,
            }
        })
        .collect()
}

/// Random token sequences over a tiny vocabulary so n-grams repeat often.
pub fn random_token_pair(rng: &mut impl rand::Rng, max_len: usize) -> (Vec<String>, Vec<String>) {
    const WORDS: [&str; 5] = ["a", "b", "c", "d", "e"];
    let seq = |rng: &mut dyn rand::RngCore| -> Vec<String> {
        let len = rand::Rng::gen_range(rng, 1..=max_len);
        (0..len).map(|_| WORDS[rand::Rng::gen_range(rng, 0..WORDS.len())].to_owned()).collect()
    };
    let hyp = seq(rng);
    let reference = seq(rng);
    (hyp, reference)
}

pub const SCRIPT_START: i64 = 1_704_067_200;

/// Three short sessions a day apart, driven through the full pipeline.
pub fn run_script(runtime: &AgentRuntime, conv: &mut longdial::Conversation) -> Vec<longdial::TurnReport> {
    let sessions: [&[&str]; 3] = [
        &["I took my first swimming lesson at the pool today.", "My coach says I kick too much.", "I love the water though."],
        &["The pool was closed for repairs this morning.", "I went running instead."],
        &["Back at the pool! My swimming coach was impressed.", "I might join a swimming club."],
    ];
    let mut reports = Vec::new();
    let mut t = SCRIPT_START;
    for lines in sessions {
        for line in lines {
            reports.push(runtime.handle_message_at(conv, line, longdial::Timestamp(t)).unwrap());
            t += 120;
        }
        t += 86_400;
    }
    reports
}

/// Answers response prompts with the gold reply for the quoted input and
/// defers everything else to the offline mock.
pub struct GoldModel {
    pub replies: HashMap<String, String>,
    pub fallback: ChatBackend,
}

impl GoldModel {
    pub fn for_dialogue(dialogue: &MultiSessionDialogue) -> Self {
        let mut replies = HashMap::new();
        for s in &dialogue.sessions {
            for w in s.turns.windows(2) {
                if w[0].speaker == dialogue.user_name() {
                    replies.insert(w[0].text.clone(), w[1].text.clone());
                }
            }
        }
        Self { replies, fallback: offline_mock() }
    }
}

impl ChatModel for GoldModel {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let user = &messages[messages.len() - 1].content;
        if user.ends_with("RESPONSE:") {
            let input = user.rsplit("just said: ").next().and_then(|s| s.lines().next()).unwrap_or("");
            if let Some(gold) = self.replies.get(input) {
                return Ok(gold.clone());
            }
        }
        self.fallback.complete(messages)
    }
}
