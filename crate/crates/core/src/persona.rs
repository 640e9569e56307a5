//! Per-speaker persona banks fed by prompt-based trait extraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatMessage, ChatModel};
use crate::clock::Timestamp;
use crate::prompts::{PromptError, PromptTemplates};

/// The extractor's answer for utterances that reveal nothing.
pub const NO_TRAIT: &str = "NO_TRAIT";

const EXTRACTED_PREFIX: &str = "extracted traits:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PersonaError {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("invalid persona bank: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Character {
    User,
    Agent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionStyle {
    /// The few-shot prompt as shipped.
    #[default]
    Direct,
    /// Asks the model to reason first; only the final line is parsed.
    ChainOfThought,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaTrait {
    pub text: String,
    pub source_utterance_id: String,
    pub extracted_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaBank {
    pub character: Character,
    pub name: String,
    traits: Vec<PersonaTrait>,
}

fn fold(text: &str) -> String {
    text.trim().to_lowercase()
}

fn is_no_trait(segment: &str) -> bool {
    let s: String = segment.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
    s == "notrait" || s == "notraits"
}

impl PersonaBank {
    pub fn new(character: Character, name: impl Into<String>) -> Self {
        Self { character, name: name.into(), traits: Vec::new() }
    }

    pub fn traits(&self) -> &[PersonaTrait] {
        &self.traits
    }

    pub fn len(&self) -> usize {
        self.traits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traits.is_empty()
    }

    pub fn contains(&self, text: &str) -> bool {
        let key = fold(text);
        self.traits.iter().any(|t| fold(&t.text) == key)
    }

    /// Appends every trait not already present (case-folded match) and
    /// returns the texts actually added.
    pub fn update(&mut self, traits: &[String], source_id: &str, now: Timestamp) -> Vec<String> {
        let mut added = Vec::new();
        for text in traits {
            let text = text.trim();
            if text.is_empty() || is_no_trait(text) || self.contains(text) {
                continue;
            }
            self.traits.push(PersonaTrait {
                text: text.to_owned(),
                source_utterance_id: source_id.to_owned(),
                extracted_at: now,
            });
            added.push(text.to_owned());
        }
        added
    }

    /// Trait texts joined by spaces, or `None` when the bank is empty.
    pub fn joined(&self) -> Option<String> {
        if self.traits.is_empty() {
            return None;
        }
        Some(self.traits.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "))
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.traits {
            if t.text.trim().is_empty() || is_no_trait(&t.text) {
                return Err(PersonaError::Invalid(format!("bad trait text {:?}", t.text)));
            }
            if !seen.insert(fold(&t.text)) {
                return Err(PersonaError::Invalid(format!("duplicate trait {:?}", t.text)));
            }
        }
        Ok(())
    }
}

/// Functional form of [`PersonaBank::update`].
pub fn update_persona_bank(mut bank: PersonaBank, traits: &[String], source_id: &str, now: Timestamp) -> PersonaBank {
    bank.update(traits, source_id, now);
    bank
}

pub fn extraction_prompt(
    utterance: &str,
    templates: &PromptTemplates,
    style: ExtractionStyle,
) -> Result<(String, String), PromptError> {
    let template = match style {
        ExtractionStyle::Direct => &templates.persona_extract,
        ExtractionStyle::ChainOfThought => &templates.persona_extract_cot,
    };
    template.render(&[("sentence", utterance)])
}

pub fn extract_traits(
    utterance: &str,
    model: &dyn ChatModel,
    templates: &PromptTemplates,
    style: ExtractionStyle,
) -> Result<Vec<String>, PersonaError> {
    if utterance.trim().is_empty() {
        return Err(PersonaError::EmptyUtterance);
    }
    let (system, user) = extraction_prompt(utterance, templates, style)?;
    let completion = model.complete(&[ChatMessage::system(system), ChatMessage::user(user)])?;
    Ok(parse_traits(&completion, style))
}

/// Turns an extractor completion into sentence-level traits.
pub fn parse_traits(completion: &str, style: ExtractionStyle) -> Vec<String> {
    let answer = match style {
        ExtractionStyle::Direct => completion.trim(),
        ExtractionStyle::ChainOfThought => completion.lines().rev().map(str::trim).find(|l| !l.is_empty()).unwrap_or(""),
    };
    let body = if answer.to_lowercase().starts_with(EXTRACTED_PREFIX) {
        &answer[EXTRACTED_PREFIX.len()..]
    } else {
        answer
    };
    body.split('.')
        .map(str::trim)
        .filter(|s| !s.is_empty() && !is_no_trait(s))
        .map(|s| format!("{s}."))
        .collect()
}
