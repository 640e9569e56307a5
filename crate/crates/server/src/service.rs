//! Conversation registry shared by the HTTP handlers and the REPL.
//!
//! Work on one conversation is serialized by a fair (FIFO) async mutex.
//! After every mutation the handler publishes an immutable view, which the
//! inspection calls read without touching that mutex.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use longdial::agent::AgentError;
use longdial::memory::RetrievalResult;
use longdial::persistence::{load_state, save_state, state_path, PersistenceError, StateSnapshot};
use longdial::{AgentRuntime, Conversation, Timestamp, TurnReport};
use thiserror::Error;
use tokio::sync::Mutex;

use crate::config::{ConfigError, ServiceConfig};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("conversation {0} not found")]
    NotFound(String),
    #[error("conversation {0} already exists")]
    AlreadyExists(String),
    #[error("invalid conversation id {0:?}: use 1-64 letters, digits, '-' or '_'")]
    InvalidId(String),
    #[error("{0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Read-only copy of a conversation taken after its last mutation.
#[derive(Debug, Clone)]
pub struct ConversationView {
    pub snapshot: StateSnapshot,
    pub last_retrieval: Option<RetrievalResult>,
}

impl ConversationView {
    fn of(conv: &Conversation) -> Self {
        Self { snapshot: conv.state.clone(), last_retrieval: conv.last_retrieval.clone() }
    }

    /// Simulated time if the conversation has a clock, wall time otherwise.
    pub fn now(&self) -> Timestamp {
        self.snapshot.simulated_clock.unwrap_or_else(Timestamp::now)
    }
}

struct Slot {
    work: Arc<Mutex<Conversation>>,
    published: RwLock<Arc<ConversationView>>,
}

impl Slot {
    fn new(conv: Conversation) -> Arc<Self> {
        let view = Arc::new(ConversationView::of(&conv));
        Arc::new(Self { work: Arc::new(Mutex::new(conv)), published: RwLock::new(view) })
    }

    fn publish(&self, conv: &Conversation) {
        *self.published.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(ConversationView::of(conv));
    }

    fn view(&self) -> Arc<ConversationView> {
        self.published.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

pub struct Service {
    config: ServiceConfig,
    runtime: Arc<AgentRuntime>,
    slots: RwLock<HashMap<String, Arc<Slot>>>,
}

fn valid_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl Service {
    /// Validates `config` and builds the runtime it describes.
    pub fn from_config(config: ServiceConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let runtime = config.build_runtime()?;
        Ok(Self::new(config, runtime))
    }

    pub fn new(config: ServiceConfig, runtime: AgentRuntime) -> Self {
        Self { config, runtime: Arc::new(runtime), slots: RwLock::new(HashMap::new()) }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn runtime(&self) -> &AgentRuntime {
        &self.runtime
    }

    /// Number of conversations currently held in memory.
    pub fn loaded(&self) -> usize {
        self.slots.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    fn path(&self, id: &str) -> PathBuf {
        state_path(&self.config.data_dir, id)
    }

    fn cached(&self, id: &str) -> Option<Arc<Slot>> {
        self.slots.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    /// Inserts `conv` unless another caller got there first; either way the
    /// slot now registered for the id is returned.
    fn register(&self, conv: Conversation) -> Arc<Slot> {
        let id = conv.id().to_owned();
        let mut slots = self.slots.write().unwrap_or_else(|e| e.into_inner());
        slots.entry(id).or_insert_with(|| Slot::new(conv)).clone()
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        if !valid_id(id) {
            return Err(ServiceError::InvalidId(id.into()));
        }
        if let Some(slot) = self.cached(id) {
            return Ok(slot);
        }
        let path = self.path(id);
        if !path.exists() {
            return Err(ServiceError::NotFound(id.into()));
        }
        let snapshot = load_state(&path)?;
        Ok(self.register(Conversation::from_snapshot(snapshot)))
    }

    /// Creates and persists a new conversation. A random id is chosen when
    /// `id` is `None`.
    pub fn create(&self, user_name: &str, agent_name: &str, id: Option<&str>) -> Result<Arc<ConversationView>, ServiceError> {
        let (user_name, agent_name) = (user_name.trim(), agent_name.trim());
        if user_name.is_empty() || agent_name.is_empty() {
            return Err(ServiceError::InvalidRequest("user_name and agent_name must be non-empty".into()));
        }
        if user_name == agent_name {
            return Err(ServiceError::InvalidRequest("user_name and agent_name must differ".into()));
        }
        let id = match id {
            Some(id) if !valid_id(id) => return Err(ServiceError::InvalidId(id.into())),
            Some(id) => id.to_owned(),
            None => uuid::Uuid::new_v4().simple().to_string(),
        };
        if self.cached(&id).is_some() || self.path(&id).exists() {
            return Err(ServiceError::AlreadyExists(id));
        }
        let conv = Conversation::new(&id, user_name, agent_name, self.config.initial_clock());
        save_state(&conv.state, &self.path(&id))?;
        Ok(self.register(conv).view())
    }

    fn slot_or_create(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        match self.slot(id) {
            Err(ServiceError::NotFound(_)) => {
                let conv =
                    Conversation::new(id, &self.config.default_user_name, &self.config.default_agent_name, self.config.initial_clock());
                save_state(&conv.state, &self.path(id))?;
                Ok(self.register(conv))
            }
            other => other,
        }
    }

    /// Runs one user message through the agent and persists the result.
    /// Unknown ids are created with the configured default names. The
    /// snapshot is saved even when the pipeline fails part-way.
    pub async fn send_message(&self, id: &str, text: &str) -> Result<TurnReport, ServiceError> {
        let slot = self.slot_or_create(id)?;
        let mut conv = slot.work.clone().lock_owned().await;
        let runtime = self.runtime.clone();
        let path = self.path(id);
        let text = text.to_owned();
        let worker = tokio::task::spawn_blocking(move || {
            let outcome = runtime.handle_message(&mut conv, &text);
            let saved = save_state(&conv.state, &path);
            (outcome, saved, conv)
        });
        let (outcome, saved, conv) = worker.await.map_err(|e| ServiceError::Internal(e.to_string()))?;
        slot.publish(&conv);
        drop(conv);
        let report = outcome?;
        saved?;
        Ok(report)
    }

    /// Moves a conversation's simulated clock forward.
    pub async fn advance_clock(&self, id: &str, delta_secs: i64) -> Result<Timestamp, ServiceError> {
        let slot = self.slot(id)?;
        let mut conv = slot.work.lock().await;
        let before = conv.state.simulated_clock;
        let now = conv.advance_clock(delta_secs)?;
        if let Err(e) = save_state(&conv.state, &self.path(id)) {
            conv.state.simulated_clock = before;
            return Err(e.into());
        }
        slot.publish(&conv);
        Ok(now)
    }

    /// Latest published state; never waits on an in-flight message.
    pub fn view(&self, id: &str) -> Result<Arc<ConversationView>, ServiceError> {
        Ok(self.slot(id)?.view())
    }
}
