//! Response prompt assembly and generation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatMessage, ChatModel};
use crate::memory::{render_dialogue, CacheEntry, RetrievalResult, NO_RELEVANT_MEMORY};
use crate::persona::PersonaBank;
use crate::prompts::{PromptError, PromptTemplates};

/// Placeholder for an empty persona bank.
pub const NONE_OBSERVED: &str = "None observed";
/// Stand-in for `{context}` when the session has no earlier utterances.
pub const EMPTY_CONTEXT: &str = "(no earlier messages in this session)";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerationError {
    #[error("user and agent names must be non-empty")]
    MissingName,
    #[error("input utterance is empty")]
    EmptyInput,
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    Base,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub variant: PromptVariant,
}

impl PromptBundle {
    pub fn messages(&self) -> [ChatMessage; 2] {
        [ChatMessage::system(self.system_text.clone()), ChatMessage::user(self.user_text.clone())]
    }
}

/// One line per hit: `- YYYY-MM-DD: summary`.
pub fn render_memories(memories: &RetrievalResult) -> String {
    if memories.sentinel {
        return NO_RELEVANT_MEMORY.to_owned();
    }
    memories
        .hits
        .iter()
        .map(|h| format!("- {}: {}", h.record.timestamp.iso_date(), h.record.summary))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Builds the response prompt. The base variant is used only when there is
/// nothing beyond context to show: no memories and both persona banks empty.
#[allow(clippy::too_many_arguments)]
pub fn assemble_prompt(
    templates: &PromptTemplates,
    user_name: &str,
    agent_name: &str,
    context: &[CacheEntry],
    memories: &RetrievalResult,
    user_persona: &PersonaBank,
    agent_persona: &PersonaBank,
    input: &str,
) -> Result<PromptBundle, GenerationError> {
    if user_name.trim().is_empty() || agent_name.trim().is_empty() {
        return Err(GenerationError::MissingName);
    }
    if input.trim().is_empty() {
        return Err(GenerationError::EmptyInput);
    }
    let context_text = if context.is_empty() { EMPTY_CONTEXT.to_owned() } else { render_dialogue(context) };
    let base_values = [("user_name", user_name), ("agent_name", agent_name), ("context", context_text.as_str()), ("input", input)];

    if memories.sentinel && user_persona.is_empty() && agent_persona.is_empty() {
        let (system_text, user_text) = templates.response_base.render(&base_values)?;
        return Ok(PromptBundle { system_text, user_text, variant: PromptVariant::Base });
    }

    // the template supplies the sentence-final period
    let agent_traits = agent_persona
        .joined()
        .map(|s| s.trim_end_matches('.').to_owned())
        .unwrap_or_else(|| NONE_OBSERVED.to_owned());
    let user_traits = user_persona.joined().unwrap_or_else(|| NONE_OBSERVED.to_owned());
    let memory_text = render_memories(memories);
    let mut values = base_values.to_vec();
    values.extend([
        ("agent_traits", agent_traits.as_str()),
        ("memories", memory_text.as_str()),
        ("user_traits", user_traits.as_str()),
    ]);
    let (system_text, user_text) = templates.response_agent.render(&values)?;
    Ok(PromptBundle { system_text, user_text, variant: PromptVariant::Agent })
}

/// Sends the bundle and cleans the reply: trims, drops a leading
/// `RESPONSE:` tag. Replies are never truncated.
pub fn generate_response(bundle: &PromptBundle, model: &dyn ChatModel) -> Result<String, GenerationError> {
    let raw = model.complete(&bundle.messages())?;
    let text = clean_response(&raw);
    if text.is_empty() {
        return Err(GenerationError::EmptyCompletion);
    }
    Ok(text)
}

pub fn clean_response(raw: &str) -> String {
    let trimmed = raw.trim();
    let stripped = match trimmed.get(..9) {
        Some(head) if head.eq_ignore_ascii_case("RESPONSE:") => &trimmed[9..],
        _ => trimmed,
    };
    stripped.trim().to_owned()
}
