//! Multi-session dialogue corpora in JSON Lines form.
//!
//! One dialogue per line:
//!
//! ```json
//! {"v":1,"dialogue_id":"d1","speakers":["Ann","Bo"],
//!  "sessions":[{"gap_before":0,"turns":[{"speaker":"Ann","text":"Hi"}]}]}
//! ```
//!
//! `speakers` is `[user, agent]`. Blank lines are ignored.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: field {field}: {reason}")]
    Schema { line: usize, field: String, reason: String },
    #[error("reading {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    /// Seconds since the end of the previous session.
    pub gap_before: u64,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiSessionDialogue {
    #[serde(rename = "v")]
    pub version: u32,
    pub dialogue_id: String,
    /// `(user_name, agent_name)`.
    pub speakers: (String, String),
    pub sessions: Vec<Session>,
}

impl MultiSessionDialogue {
    pub fn user_name(&self) -> &str {
        &self.speakers.0
    }

    pub fn agent_name(&self) -> &str {
        &self.speakers.1
    }

    /// Checks structure; `line` is only used in error messages.
    pub fn validate(&self, line: usize) -> Result<(), CorpusError> {
        let schema = |field: &str, reason: String| Err(CorpusError::Schema { line, field: field.into(), reason });
        if self.version != CORPUS_VERSION {
            return schema("v", format!("unsupported version {}", self.version));
        }
        if self.dialogue_id.trim().is_empty() {
            return schema("dialogue_id", "empty".into());
        }
        let (user, agent) = (&self.speakers.0, &self.speakers.1);
        if user.trim().is_empty() || agent.trim().is_empty() || user == agent {
            return schema("speakers", "need two distinct non-empty names".into());
        }
        if self.sessions.is_empty() {
            return schema("sessions", "no sessions".into());
        }
        if self.sessions[0].gap_before != 0 {
            return schema("sessions[0].gap_before", "first session must have gap 0".into());
        }
        for (si, session) in self.sessions.iter().enumerate() {
            if session.turns.is_empty() {
                return schema(&format!("sessions[{si}].turns"), "empty session".into());
            }
            for (ti, turn) in session.turns.iter().enumerate() {
                let field = format!("sessions[{si}].turns[{ti}]");
                if &turn.speaker != user && &turn.speaker != agent {
                    return schema(&field, format!("unknown speaker {:?}", turn.speaker));
                }
                if turn.text.trim().is_empty() {
                    return schema(&field, "empty text".into());
                }
                if ti > 0 && session.turns[ti - 1].speaker == turn.speaker {
                    return schema(&field, "same speaker twice in a row".into());
                }
            }
        }
        Ok(())
    }
}

pub fn parse_corpus(src: &str) -> Result<Vec<MultiSessionDialogue>, CorpusError> {
    let mut out = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| CorpusError::Parse { line, reason: e.to_string() })?;
        let dialogue: MultiSessionDialogue = serde_json::from_value(value).map_err(|e| CorpusError::Schema {
            line,
            field: schema_field(&e.to_string()),
            reason: e.to_string(),
        })?;
        dialogue.validate(line)?;
        out.push(dialogue);
    }
    Ok(out)
}

fn schema_field(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("record").to_owned()
}

pub fn load_corpus(path: &Path) -> Result<Vec<MultiSessionDialogue>, CorpusError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    parse_corpus(&src)
}

pub fn to_jsonl(dialogues: &[MultiSessionDialogue]) -> String {
    dialogues
        .iter()
        .map(|d| serde_json::to_string(d).expect("dialogue serializes") + "\n")
        .collect()
}
