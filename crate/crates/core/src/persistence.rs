//! Conversation snapshots as self-describing JSON.
//!
//! Files are written atomically (temp file in the target directory, then
//! rename) with a fixed field order, so saving the same snapshot twice
//! yields byte-identical files. Floats are written in shortest round-trip
//! form, which makes save/load exact.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::memory::{CacheEntry, LongTermMemoryBank, ShortTermCache};
use crate::persona::{Character, PersonaBank};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistenceError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("serialization failed: {0}")]
    Serialization(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema version {found} not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("invariant violated in {field}: {reason}")]
    InvariantViolation { field: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaPair {
    pub user: PersonaBank,
    pub agent: PersonaBank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub schema_version: u32,
    pub conversation_id: String,
    pub user_name: String,
    pub agent_name: String,
    /// Present when the conversation runs on a simulated clock.
    pub simulated_clock: Option<Timestamp>,
    pub bank: LongTermMemoryBank,
    pub cache: ShortTermCache,
    pub personas: PersonaPair,
    pub transcript: Vec<CacheEntry>,
}

impl StateSnapshot {
    pub fn new(conversation_id: &str, user_name: &str, agent_name: &str, simulated_clock: Option<Timestamp>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            conversation_id: conversation_id.into(),
            user_name: user_name.into(),
            agent_name: agent_name.into(),
            simulated_clock,
            bank: LongTermMemoryBank::new(conversation_id),
            cache: ShortTermCache::new(),
            personas: PersonaPair {
                user: PersonaBank::new(Character::User, user_name),
                agent: PersonaBank::new(Character::Agent, agent_name),
            },
            transcript: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), PersistenceError> {
        let violation = |field: &str, reason: String| Err(PersistenceError::InvariantViolation { field: field.into(), reason });
        if self.schema_version != SCHEMA_VERSION {
            return Err(PersistenceError::SchemaVersionMismatch { found: self.schema_version.into(), expected: SCHEMA_VERSION });
        }
        if self.conversation_id.is_empty() {
            return violation("conversation_id", "empty".into());
        }
        if self.user_name.trim().is_empty() || self.agent_name.trim().is_empty() {
            return violation("user_name/agent_name", "empty".into());
        }
        if let Err(e) = self.bank.validate() {
            return violation("bank", e.to_string());
        }
        if let Some(dim) = self.bank.records().first().map(|r| r.embedding.dim()) {
            if self.bank.records().iter().any(|r| r.embedding.dim() != dim) {
                return violation("bank", "mixed embedding dimensions".into());
            }
        }
        if let Err(e) = self.cache.validate() {
            return violation("cache", e.to_string());
        }
        if let (Some(latest), Some(first)) = (self.bank.latest_timestamp(), self.cache.entries().first()) {
            if first.timestamp < latest {
                return violation("cache", "cache starts before the newest memory".into());
            }
        }
        if let Some(clock) = self.simulated_clock {
            let newest = self.transcript.last().map(|e| e.timestamp);
            if newest.is_some_and(|t| t > clock) {
                return violation("simulated_clock", "behind the transcript".into());
            }
        }
        for (field, bank, expect) in [
            ("personas.user", &self.personas.user, Character::User),
            ("personas.agent", &self.personas.agent, Character::Agent),
        ] {
            if bank.character != expect {
                return violation(field, format!("character is {:?}", bank.character));
            }
            if let Err(e) = bank.validate() {
                return violation(field, e.to_string());
            }
        }
        if self.transcript.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return violation("transcript", "timestamps decrease".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, PersistenceError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| PersistenceError::Serialization(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(src: &str) -> Result<Self, PersistenceError> {
        let value: serde_json::Value = serde_json::from_str(src).map_err(|e| PersistenceError::Parse(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(PersistenceError::SchemaVersionMismatch { found: v, expected: SCHEMA_VERSION }),
            None => return Err(PersistenceError::Parse("missing schema_version".into())),
        }
        let snapshot: StateSnapshot = serde_json::from_value(value).map_err(|e| PersistenceError::Parse(e.to_string()))?;
        for r in snapshot.bank.records() {
            if let Err(e) = r.embedding.validate() {
                return Err(PersistenceError::InvariantViolation { field: format!("bank.{}", r.record_id), reason: e.to_string() });
            }
        }
        snapshot.validate()?;
        Ok(snapshot)
    }
}

/// `{data_dir}/{conversation_id}.state.json`
pub fn state_path(data_dir: &Path, conversation_id: &str) -> PathBuf {
    data_dir.join(format!("{conversation_id}.state.json"))
}

pub fn save_state(snapshot: &StateSnapshot, path: &Path) -> Result<(), PersistenceError> {
    snapshot.validate()?;
    let json = snapshot.to_json()?;
    let io_err = |source: std::io::Error| PersistenceError::Io { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(json.as_bytes()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<StateSnapshot, PersistenceError> {
    let src = std::fs::read_to_string(path)
        .map_err(|source| PersistenceError::Io { path: path.display().to_string(), source })?;
    StateSnapshot::from_json(&src)
}
