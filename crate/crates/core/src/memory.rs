//! Long-term event memory and the short-term session cache.
//!
//! A memory's retrieval score is `λ · (s_sem + s_top)`, where `s_sem` is the
//! clamped cosine between query and memory embeddings, `s_top` the topic
//! overlap, and `λ = exp(-t/τ)` decays with the memory's age `t` in hours.
//! Only memories with `s_sem > γ` are eligible. When a new utterance arrives
//! more than `β` seconds after the last cached one, the cache is summarized
//! into a new event record and restarted with the new utterance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatMessage, ChatModel};
use crate::clock::Timestamp;
use crate::embedding::{semantic_score, EmbeddingError, EmbeddingVector, TextEncoder};
use crate::prompts::{PromptError, PromptTemplates};
use crate::topics::{extract_topics, topic_overlap, TopicSet};

/// Returned in place of memories when nothing clears the threshold.
pub const NO_RELEVANT_MEMORY: &str = "No relevant memory";

/// Summaries longer than this are cut at a word boundary.
pub const MAX_SUMMARY_WORDS: usize = 60;

const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("clock skew: {now} is earlier than {latest}")]
    ClockSkew { now: Timestamp, latest: Timestamp },
    #[error("cannot summarize an empty cache")]
    EmptyCache,
    #[error("summarizer returned an empty summary")]
    EmptySummary,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub record_id: String,
    pub timestamp: Timestamp,
    pub summary: String,
    pub embedding: EmbeddingVector,
    pub topics: TopicSet,
    pub source_session: u32,
}

impl EventRecord {
    pub fn validate(&self) -> Result<(), MemoryError> {
        let bad = |m: String| Err(MemoryError::InvalidRecord(format!("{}: {m}", self.record_id)));
        if self.record_id.is_empty() {
            return bad("empty record id".into());
        }
        if self.summary.trim().is_empty() {
            return bad("empty summary".into());
        }
        self.embedding.validate()?;
        if !self.embedding.is_unit() {
            return bad(format!("embedding norm {} is not 1", self.embedding.norm()));
        }
        if let Some(t) = self.topics.find_invalid() {
            return bad(format!("invalid topic token {t:?}"));
        }
        if self.source_session == 0 {
            return bad("source_session must be >= 1".into());
        }
        Ok(())
    }
}

/// Records in insertion order, which is also chronological order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LongTermMemoryBank {
    pub owner: String,
    records: Vec<EventRecord>,
}

impl LongTermMemoryBank {
    pub fn new(owner: impl Into<String>) -> Self {
        Self { owner: owner.into(), records: Vec::new() }
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn latest_timestamp(&self) -> Option<Timestamp> {
        self.records.last().map(|r| r.timestamp)
    }

    pub fn push(&mut self, record: EventRecord) -> Result<(), MemoryError> {
        record.validate()?;
        if let Some(latest) = self.latest_timestamp() {
            if record.timestamp < latest {
                return Err(MemoryError::ClockSkew { now: record.timestamp, latest });
            }
        }
        if self.records.iter().any(|r| r.record_id == record.record_id) {
            return Err(MemoryError::InvalidRecord(format!("duplicate id {}", record.record_id)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn next_record_id(&self) -> String {
        format!("evt-{:05}", self.records.len() + 1)
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        let mut rebuilt = LongTermMemoryBank::new(self.owner.clone());
        for r in &self.records {
            rebuilt.push(r.clone())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub timestamp: Timestamp,
    pub speaker: String,
    pub text: String,
}

impl CacheEntry {
    pub fn new(timestamp: Timestamp, speaker: impl Into<String>, text: impl Into<String>) -> Self {
        Self { timestamp, speaker: speaker.into(), text: text.into() }
    }
}

/// Utterances of the ongoing session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortTermCache {
    entries: Vec<CacheEntry>,
    session_index: u32,
}

impl Default for ShortTermCache {
    fn default() -> Self {
        Self { entries: Vec::new(), session_index: 1 }
    }
}

impl ShortTermCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn session_index(&self) -> u32 {
        self.session_index
    }

    pub fn last_timestamp(&self) -> Option<Timestamp> {
        self.entries.last().map(|e| e.timestamp)
    }

    pub fn push(&mut self, entry: CacheEntry) -> Result<(), MemoryError> {
        if let Some(latest) = self.last_timestamp() {
            if entry.timestamp < latest {
                return Err(MemoryError::ClockSkew { now: entry.timestamp, latest });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Starts the next session holding only `first`.
    fn roll_over(&mut self, first: CacheEntry) {
        self.entries = vec![first];
        self.session_index += 1;
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.session_index == 0 {
            return Err(MemoryError::InvalidRecord("session_index must be >= 1".into()));
        }
        for pair in self.entries.windows(2) {
            if pair[1].timestamp < pair[0].timestamp {
                return Err(MemoryError::ClockSkew { now: pair[1].timestamp, latest: pair[0].timestamp });
            }
        }
        Ok(())
    }
}

/// Renders entries as `Speaker: text` lines.
pub fn render_dialogue(entries: &[CacheEntry]) -> String {
    entries.iter().map(|e| format!("{}: {}", e.speaker, e.text)).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Semantic threshold γ in `[0, 1]`.
    pub gamma: f64,
    /// Decay constant τ, in hours.
    pub tau_hours: f64,
    pub top_k: usize,
    /// Session gap threshold β, in seconds.
    pub beta_secs: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { gamma: 0.5, tau_hours: 168.0, top_k: 2, beta_secs: 3600.0 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), MemoryError> {
        let bad = |m: &str| Err(MemoryError::InvalidConfig(m.into()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau_hours > 0.0) || !self.tau_hours.is_finite() {
            return bad("tau_hours must be positive");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if !(self.beta_secs > 0.0) {
            return bad("beta_secs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub s_sem: f64,
    pub s_top: f64,
    pub lambda_t: f64,
    pub s_overall: f64,
}

/// `exp(-t/τ)` with `t` and `τ` in hours.
pub fn time_decay(elapsed_hours: f64, tau_hours: f64) -> f64 {
    (-elapsed_hours / tau_hours).exp()
}

pub fn combine_scores(s_sem: f64, s_top: f64, lambda_t: f64) -> f64 {
    lambda_t * (s_sem + s_top)
}

pub fn overall_score(
    query_embedding: &EmbeddingVector,
    query_topics: &TopicSet,
    record: &EventRecord,
    now: Timestamp,
    cfg: &RetrievalConfig,
) -> Result<ScoreBreakdown, MemoryError> {
    if now < record.timestamp {
        return Err(MemoryError::ClockSkew { now, latest: record.timestamp });
    }
    let s_sem = semantic_score(query_embedding, &record.embedding)?;
    let s_top = topic_overlap(query_topics, &record.topics);
    let hours = now.seconds_since(record.timestamp) as f64 / SECONDS_PER_HOUR;
    let lambda_t = time_decay(hours, cfg.tau_hours);
    Ok(ScoreBreakdown { s_sem, s_top, lambda_t, s_overall: combine_scores(s_sem, s_top, lambda_t) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub record: EventRecord,
    #[serde(flatten)]
    pub scores: ScoreBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<RetrievalHit>,
    /// True exactly when `hits` is empty ("No relevant memory").
    pub sentinel: bool,
}

impl RetrievalResult {
    pub fn none() -> Self {
        Self { hits: Vec::new(), sentinel: true }
    }

    fn from_hits(hits: Vec<RetrievalHit>) -> Self {
        let sentinel = hits.is_empty();
        Self { hits, sentinel }
    }
}

/// Scores every record and returns the top `k` with `s_sem > γ`. Ties on
/// the overall score go to the newer record, then to the later insertion.
pub fn rank_records(
    bank: &LongTermMemoryBank,
    query_embedding: &EmbeddingVector,
    query_topics: &TopicSet,
    now: Timestamp,
    cfg: &RetrievalConfig,
) -> Result<RetrievalResult, MemoryError> {
    let mut scored = Vec::new();
    for (idx, record) in bank.records().iter().enumerate() {
        let scores = overall_score(query_embedding, query_topics, record, now, cfg)?;
        if scores.s_sem > cfg.gamma {
            scored.push((idx, scores));
        }
    }
    scored.sort_by(|(ia, a), (ib, b)| {
        b.s_overall
            .partial_cmp(&a.s_overall)
            .unwrap_or(Ordering::Equal)
            .then_with(|| bank.records()[*ib].timestamp.cmp(&bank.records()[*ia].timestamp))
            .then_with(|| ib.cmp(ia))
    });
    scored.truncate(cfg.top_k);
    Ok(RetrievalResult::from_hits(
        scored
            .into_iter()
            .map(|(idx, scores)| RetrievalHit { record: bank.records()[idx].clone(), scores })
            .collect(),
    ))
}

pub fn retrieve(
    bank: &LongTermMemoryBank,
    query_text: &str,
    now: Timestamp,
    cfg: &RetrievalConfig,
    encoder: &dyn TextEncoder,
) -> Result<RetrievalResult, MemoryError> {
    if bank.is_empty() {
        return Ok(RetrievalResult::none());
    }
    let query_embedding = encoder.embed(query_text)?;
    let query_topics = extract_topics(query_text);
    rank_records(bank, &query_embedding, &query_topics, now, cfg)
}

/// What the summarizer needs to turn a finished session into a record.
pub struct EventSummarizer<'a> {
    pub model: &'a dyn ChatModel,
    pub encoder: &'a dyn TextEncoder,
    pub templates: &'a PromptTemplates,
    pub user_name: &'a str,
    pub agent_name: &'a str,
}

/// Summarizes the cached session with the event-summary prompt. The reply is
/// trimmed, a leading `SUMMARY:` tag is dropped, and anything beyond
/// [`MAX_SUMMARY_WORDS`] words is cut.
pub fn summarize_cache(
    cache: &ShortTermCache,
    user_name: &str,
    agent_name: &str,
    model: &dyn ChatModel,
    templates: &PromptTemplates,
) -> Result<String, MemoryError> {
    if cache.is_empty() {
        return Err(MemoryError::EmptyCache);
    }
    let (system, user) = summary_prompt(cache, user_name, agent_name, templates)?;
    let raw = model.complete(&[ChatMessage::system(system), ChatMessage::user(user)])?;
    let text = raw.trim();
    let text = text.strip_prefix("SUMMARY:").unwrap_or(text).trim();
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(MemoryError::EmptySummary);
    }
    if words.len() > MAX_SUMMARY_WORDS {
        return Ok(words[..MAX_SUMMARY_WORDS].join(" "));
    }
    Ok(text.to_owned())
}

pub fn summary_prompt(
    cache: &ShortTermCache,
    user_name: &str,
    agent_name: &str,
    templates: &PromptTemplates,
) -> Result<(String, String), PromptError> {
    let context = render_dialogue(cache.entries());
    templates.event_summary.render(&[("user_name", user_name), ("agent_name", agent_name), ("context", &context)])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub boundary_fired: bool,
    /// Id of the record created by the boundary, if one fired.
    pub new_record: Option<String>,
    pub session_index: u32,
}

/// Feeds one utterance into the cache, closing the session first if the gap
/// since the last cached utterance exceeds β. On any error neither the
/// cache nor the bank is modified.
pub fn observe_utterance(
    cache: &mut ShortTermCache,
    bank: &mut LongTermMemoryBank,
    entry: CacheEntry,
    cfg: &RetrievalConfig,
    summarizer: &EventSummarizer<'_>,
) -> Result<Observation, MemoryError> {
    let Some(last) = cache.last_timestamp() else {
        cache.push(entry)?;
        return Ok(Observation { boundary_fired: false, new_record: None, session_index: cache.session_index() });
    };
    if entry.timestamp < last {
        return Err(MemoryError::ClockSkew { now: entry.timestamp, latest: last });
    }
    if (entry.timestamp.seconds_since(last) as f64) <= cfg.beta_secs {
        cache.push(entry)?;
        return Ok(Observation { boundary_fired: false, new_record: None, session_index: cache.session_index() });
    }

    let summary = summarize_cache(cache, summarizer.user_name, summarizer.agent_name, summarizer.model, summarizer.templates)?;
    let record = EventRecord {
        record_id: bank.next_record_id(),
        timestamp: last,
        embedding: summarizer.encoder.embed(&summary)?,
        topics: extract_topics(&cache.entries().iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join("\n")),
        summary,
        source_session: cache.session_index(),
    };
    let id = record.record_id.clone();
    bank.push(record)?;
    cache.roll_over(entry);
    Ok(Observation { boundary_fired: true, new_record: Some(id), session_index: cache.session_index() })
}
