//! Topic sets and the topic overlap score.
//!
//! Topics approximate the nouns of a conversation with stopword-filtered
//! content tokens. Overlap between a query set `Q` and a key set `K` is
//! `(|Q∩K|/|Q| + |Q∩K|/|K|) / 2`, which is 0 when either set is empty.

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const STOPWORDS_SRC: &str = include_str!("../data/stopwords.txt");

/// Minimum token length (in chars) kept as a topic.
pub const MIN_TOPIC_LEN: usize = 3;

fn stopwords() -> &'static HashSet<String> {
    static LIST: OnceLock<HashSet<String>> = OnceLock::new();
    LIST.get_or_init(|| parse_stopwords(STOPWORDS_SRC))
}

/// Parses a stopword file: one token per line, `#` starts a comment line.
pub fn parse_stopwords(src: &str) -> HashSet<String> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Lowercases and splits on runs of non-alphanumeric characters. Shared by
/// topic extraction, the hashing encoder and the evaluation metrics.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// True when `token` survives the topic filter (length and stopword list).
pub fn is_topic_token(token: &str) -> bool {
    token.chars().count() >= MIN_TOPIC_LEN && !is_stopword(token)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicSet(BTreeSet<String>);

impl TopicSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn intersection_len(&self, other: &TopicSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    /// Checks the set invariants; returns the first offending token.
    pub fn find_invalid(&self) -> Option<&str> {
        self.iter().find(|t| *t != t.to_lowercase() || !is_topic_token(t))
    }
}

impl FromIterator<String> for TopicSet {
    /// Collects tokens verbatim; callers are expected to pass already
    /// filtered tokens (see [`extract_topics`]).
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        TopicSet(iter.into_iter().collect())
    }
}

pub fn extract_topics(text: &str) -> TopicSet {
    tokenize(text).into_iter().filter(|t| is_topic_token(t)).collect()
}

pub fn topic_overlap(query: &TopicSet, key: &TopicSet) -> f64 {
    if query.is_empty() || key.is_empty() {
        return 0.0;
    }
    let shared = query.intersection_len(key) as f64;
    0.5 * (shared / query.len() as f64 + shared / key.len() as f64)
}
