//! Prompt templates and placeholder rendering.
//!
//! A template file holds a system part and a user part:
//!
//! ```text
//! [system]
//! ...system text with {placeholders}...
//! [user]
//! ...user text...
//! ```
//!
//! Placeholders are `{lower_snake_case}` identifiers. Any other brace is
//! copied through verbatim.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {name}: {reason}")]
    Malformed { name: String, reason: String },
    #[error("template {template} uses {{{placeholder}}} but no value was supplied")]
    MissingValue { template: String, placeholder: String },
    #[error("reading template {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub system: String,
    pub user: String,
}

const SYSTEM_HEADER: &str = "[system]\n";
const USER_HEADER: &str = "\n[user]\n";

impl PromptTemplate {
    pub fn parse(name: &str, src: &str) -> Result<Self, PromptError> {
        let malformed = |reason: &str| PromptError::Malformed { name: name.into(), reason: reason.into() };
        let body = src
            .strip_prefix(SYSTEM_HEADER)
            .ok_or_else(|| malformed("must start with a [system] line"))?;
        let split = body.find(USER_HEADER).ok_or_else(|| malformed("missing [user] line"))?;
        let system = &body[..split];
        let user = body[split + USER_HEADER.len()..].strip_suffix('\n').unwrap_or(&body[split + USER_HEADER.len()..]);
        if system.trim().is_empty() || user.trim().is_empty() {
            return Err(malformed("empty system or user part"));
        }
        Ok(Self { name: name.into(), system: system.into(), user: user.into() })
    }

    /// Renders both parts, returning `(system, user)`.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<(String, String), PromptError> {
        Ok((render(&self.name, &self.system, values)?, render(&self.name, &self.user, values)?))
    }

    pub fn placeholders(&self) -> Vec<String> {
        let mut out = placeholders_in(&self.system);
        out.extend(placeholders_in(&self.user));
        out
    }
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

fn placeholders_in(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                out.push(after[..close].to_owned());
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

/// Single-pass substitution; substituted values are never rescanned.
pub fn render(template_name: &str, text: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let lookup: HashMap<&str, &str> = values.iter().copied().collect();
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                let key = &after[..close];
                let value = lookup.get(key).ok_or_else(|| PromptError::MissingValue {
                    template: template_name.into(),
                    placeholder: key.into(),
                })?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub event_summary: PromptTemplate,
    pub persona_extract: PromptTemplate,
    pub persona_extract_cot: PromptTemplate,
    pub response_base: PromptTemplate,
    pub response_agent: PromptTemplate,
}

pub const TEMPLATE_NAMES: [&str; 5] =
    ["event_summary", "persona_extract", "persona_extract_cot", "response_base", "response_agent"];

/// Shipped template sources, keyed by file stem.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "event_summary" => include_str!("../data/prompts/event_summary.txt"),
        "persona_extract" => include_str!("../data/prompts/persona_extract.txt"),
        "persona_extract_cot" => include_str!("../data/prompts/persona_extract_cot.txt"),
        "response_base" => include_str!("../data/prompts/response_base.txt"),
        "response_agent" => include_str!("../data/prompts/response_agent.txt"),
        _ => return None,
    })
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::from_sources(|name| Ok(builtin_source(name).unwrap().to_owned())).expect("shipped templates parse")
    }
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self::default()
    }

    /// Loads `{name}.txt` from `dir` for every template present there and
    /// falls back to the shipped text for the rest.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        Self::from_sources(|name| {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                std::fs::read_to_string(&path)
                    .map_err(|e| PromptError::Io { path: path.display().to_string(), reason: e.to_string() })
            } else {
                Ok(builtin_source(name).unwrap().to_owned())
            }
        })
    }

    fn from_sources(mut load: impl FnMut(&str) -> Result<String, PromptError>) -> Result<Self, PromptError> {
        let mut get = |name: &str| -> Result<PromptTemplate, PromptError> { PromptTemplate::parse(name, &load(name)?) };
        Ok(Self {
            event_summary: get("event_summary")?,
            persona_extract: get("persona_extract")?,
            persona_extract_cot: get("persona_extract_cot")?,
            response_base: get("response_base")?,
            response_agent: get("response_agent")?,
        })
    }
}
