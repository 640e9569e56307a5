//! The full conversation turn.
//!
//! A user message runs through: observe the user utterance (closing the
//! previous session if the gap exceeds β) → retrieve memories → extract
//! user traits → assemble the prompt → generate → observe the reply →
//! extract agent traits.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ChatModel;
use crate::clock::Timestamp;
use crate::embedding::TextEncoder;
use crate::generation::{assemble_prompt, generate_response, GenerationError, PromptBundle, PromptVariant};
use crate::memory::{
    observe_utterance, retrieve, CacheEntry, EventSummarizer, MemoryError, Observation, RetrievalConfig,
    RetrievalResult,
};
use crate::persistence::StateSnapshot;
use crate::persona::{extract_traits, Character, ExtractionStyle, PersonaError};
use crate::prompts::PromptTemplates;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("message text is empty")]
    EmptyInput,
    #[error("simulated clock is disabled for this conversation")]
    ClockDisabled,
    #[error("clock delta must be positive, got {0}")]
    NonPositiveDelta(i64),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

/// Which optional modules feed the response prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ModuleSet {
    pub memory: bool,
    pub persona_user: bool,
    pub persona_agent: bool,
}

impl ModuleSet {
    pub const FULL: ModuleSet = ModuleSet { memory: true, persona_user: true, persona_agent: true };
    pub const CONTEXT_ONLY: ModuleSet = ModuleSet { memory: false, persona_user: false, persona_agent: false };

    /// The five rows of a module ablation study.
    pub fn ablation_rows() -> [ModuleSet; 5] {
        [
            Self::CONTEXT_ONLY,
            ModuleSet { memory: true, ..Self::CONTEXT_ONLY },
            ModuleSet { persona_user: true, ..Self::CONTEXT_ONLY },
            ModuleSet { persona_agent: true, ..Self::CONTEXT_ONLY },
            Self::FULL,
        ]
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.memory {
            out.push("memory");
        }
        if self.persona_user {
            out.push("persona_user");
        }
        if self.persona_agent {
            out.push("persona_agent");
        }
        out
    }
}

impl Default for ModuleSet {
    fn default() -> Self {
        Self::FULL
    }
}

impl fmt::Display for ModuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.names().as_slice() {
            [] => f.write_str("context"),
            names => f.write_str(&names.join(",")),
        }
    }
}

impl FromStr for ModuleSet {
    type Err = String;

    /// Comma-separated module names; `""`, `none` or `context` mean no
    /// modules, `full` or `all` mean every module.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = Self::CONTEXT_ONLY;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "none" | "context" => {}
                "full" | "all" => set = Self::FULL,
                "memory" => set.memory = true,
                "persona_user" => set.persona_user = true,
                "persona_agent" => set.persona_agent = true,
                other => return Err(format!("unknown module {other:?}")),
            }
        }
        Ok(set)
    }
}

/// Shared, immutable pieces of the agent.
#[derive(Clone)]
pub struct AgentRuntime {
    pub templates: PromptTemplates,
    pub encoder: Arc<dyn TextEncoder>,
    pub model: Arc<dyn ChatModel>,
    pub retrieval: RetrievalConfig,
    pub extraction: ExtractionStyle,
    pub modules: ModuleSet,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaDelta {
    pub user: Vec<String>,
    pub agent: Vec<String>,
}

/// Everything a caller may want to inspect about one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnReport {
    pub response: String,
    pub now: Timestamp,
    pub variant: PromptVariant,
    pub prompt: PromptBundle,
    pub retrieval: RetrievalResult,
    pub user_observation: Observation,
    pub agent_observation: Observation,
    /// True when the user's message opened a new session.
    pub boundary_fired: bool,
    pub persona_delta: PersonaDelta,
    /// Pipeline steps in the order they ran.
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub state: StateSnapshot,
    /// Diagnostics of the most recent retrieval; not persisted.
    pub last_retrieval: Option<RetrievalResult>,
}

impl Conversation {
    pub fn new(id: &str, user_name: &str, agent_name: &str, simulated_clock: Option<Timestamp>) -> Self {
        Self::from_snapshot(StateSnapshot::new(id, user_name, agent_name, simulated_clock))
    }

    pub fn from_snapshot(state: StateSnapshot) -> Self {
        Self { state, last_retrieval: None }
    }

    pub fn id(&self) -> &str {
        &self.state.conversation_id
    }

    pub fn now(&self) -> Timestamp {
        self.state.simulated_clock.unwrap_or_else(Timestamp::now)
    }

    pub fn advance_clock(&mut self, delta_secs: i64) -> Result<Timestamp, AgentError> {
        let clock = self.state.simulated_clock.ok_or(AgentError::ClockDisabled)?;
        if delta_secs <= 0 {
            return Err(AgentError::NonPositiveDelta(delta_secs));
        }
        let next = clock.plus_seconds(delta_secs);
        self.state.simulated_clock = Some(next);
        Ok(next)
    }

    pub(crate) fn set_clock(&mut self, now: Timestamp) {
        if self.state.simulated_clock.is_some() {
            self.state.simulated_clock = Some(now);
        }
    }
}

impl AgentRuntime {
    pub fn new(model: Arc<dyn ChatModel>, encoder: Arc<dyn TextEncoder>) -> Self {
        Self {
            templates: PromptTemplates::builtin(),
            encoder,
            model,
            retrieval: RetrievalConfig::default(),
            extraction: ExtractionStyle::default(),
            modules: ModuleSet::FULL,
        }
    }

    pub fn with_modules(mut self, modules: ModuleSet) -> Self {
        self.modules = modules;
        self
    }

    /// Adds an utterance to the transcript and the short-term cache.
    pub fn observe(
        &self,
        conv: &mut Conversation,
        speaker: Character,
        text: &str,
        now: Timestamp,
    ) -> Result<Observation, AgentError> {
        let state = &mut conv.state;
        let name = match speaker {
            Character::User => state.user_name.clone(),
            Character::Agent => state.agent_name.clone(),
        };
        let summarizer = EventSummarizer {
            model: self.model.as_ref(),
            encoder: self.encoder.as_ref(),
            templates: &self.templates,
            user_name: &state.user_name,
            agent_name: &state.agent_name,
        };
        let entry = CacheEntry::new(now, name, text);
        let obs = observe_utterance(&mut state.cache, &mut state.bank, entry.clone(), &self.retrieval, &summarizer)?;
        state.transcript.push(entry);
        Ok(obs)
    }

    /// Extracts traits from `text` into the speaker's bank when that persona
    /// module is enabled. Returns the newly added traits.
    pub fn update_persona(
        &self,
        conv: &mut Conversation,
        speaker: Character,
        text: &str,
        now: Timestamp,
    ) -> Result<Vec<String>, AgentError> {
        let enabled = match speaker {
            Character::User => self.modules.persona_user,
            Character::Agent => self.modules.persona_agent,
        };
        if !enabled {
            return Ok(Vec::new());
        }
        let traits = extract_traits(text, self.model.as_ref(), &self.templates, self.extraction)?;
        let source = format!("u{:05}", conv.state.transcript.len());
        let bank = match speaker {
            Character::User => &mut conv.state.personas.user,
            Character::Agent => &mut conv.state.personas.agent,
        };
        Ok(bank.update(&traits, &source, now))
    }

    pub fn retrieve_for(&self, conv: &mut Conversation, query: &str, now: Timestamp) -> Result<RetrievalResult, AgentError> {
        let result = if self.modules.memory {
            retrieve(&conv.state.bank, query, now, &self.retrieval, self.encoder.as_ref())?
        } else {
            RetrievalResult::none()
        };
        conv.last_retrieval = Some(result.clone());
        Ok(result)
    }

    /// Builds the response prompt for `input`, which must already be the
    /// newest cache entry; earlier entries form the context.
    pub fn compose_prompt(&self, conv: &Conversation, input: &str, memories: &RetrievalResult) -> Result<PromptBundle, AgentError> {
        let state = &conv.state;
        let entries = state.cache.entries();
        let context = &entries[..entries.len().saturating_sub(1)];
        Ok(assemble_prompt(
            &self.templates,
            &state.user_name,
            &state.agent_name,
            context,
            memories,
            &state.personas.user,
            &state.personas.agent,
            input,
        )?)
    }

    /// Runs one user message through the pipeline at the conversation's
    /// current time. On error the state keeps every step that completed.
    pub fn handle_message(&self, conv: &mut Conversation, user_text: &str) -> Result<TurnReport, AgentError> {
        let now = conv.now();
        self.handle_message_at(conv, user_text, now)
    }

    pub fn handle_message_at(&self, conv: &mut Conversation, user_text: &str, now: Timestamp) -> Result<TurnReport, AgentError> {
        let text = user_text.trim();
        if text.is_empty() {
            return Err(AgentError::EmptyInput);
        }
        conv.set_clock(now);
        let mut steps = Vec::new();

        let user_observation = self.observe(conv, Character::User, text, now)?;
        steps.push("observe_user".to_owned());
        let retrieval = self.retrieve_for(conv, text, now)?;
        steps.push("retrieve".to_owned());
        let user_traits = self.update_persona(conv, Character::User, text, now)?;
        steps.push("extract_user_traits".to_owned());
        let prompt = self.compose_prompt(conv, text, &retrieval)?;
        steps.push("assemble_prompt".to_owned());
        let response = generate_response(&prompt, self.model.as_ref())?;
        steps.push("generate".to_owned());
        let agent_observation = self.observe(conv, Character::Agent, &response, now)?;
        steps.push("observe_agent".to_owned());
        let agent_traits = self.update_persona(conv, Character::Agent, &response, now)?;
        steps.push("extract_agent_traits".to_owned());

        Ok(TurnReport {
            response,
            now,
            variant: prompt.variant,
            prompt,
            retrieval,
            boundary_fired: user_observation.boundary_fired,
            user_observation,
            agent_observation,
            persona_delta: PersonaDelta { user: user_traits, agent: agent_traits },
            steps,
        })
    }
}
