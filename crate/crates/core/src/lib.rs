//! Long-term dialogue agent runtime.
//!
//! The crate is organised around the turn pipeline of a long-running
//! conversation:
//!
//! * [`memory`] keeps the short-term cache of the ongoing session and the
//!   long-term bank of summarized events, and ranks events against a query
//!   by semantic similarity, topic overlap and time decay.
//! * [`persona`] extracts traits from every utterance and accumulates them
//!   per speaker.
//! * [`generation`] renders the response prompt from context, memories and
//!   personas and asks a [`backend::ChatModel`] for a reply.
//! * [`agent`] composes the above into a full conversation turn.
//! * [`eval`], [`corpus`] and [`metrics`] replay multi-session corpora and
//!   score generated replies.

pub mod agent;
pub mod backend;
pub mod clock;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod generation;
mod hashing;
pub mod memory;
pub mod metrics;
pub mod persistence;
pub mod persona;
pub mod prompts;
pub mod topics;
pub mod transport;

pub use agent::{AgentRuntime, Conversation, ModuleSet, TurnReport};
pub use backend::{BackendConfig, BackendKind, ChatBackend, ChatMessage, ChatModel, ChatRole};
pub use clock::Timestamp;
pub use embedding::{EmbeddingProviderSpec, EmbeddingVector, ProviderKind, TextEncoder};
pub use memory::{
    EventRecord, LongTermMemoryBank, RetrievalConfig, RetrievalResult, ScoreBreakdown,
    ShortTermCache,
};
pub use persona::{Character, PersonaBank, PersonaTrait};
pub use prompts::PromptTemplates;
pub use topics::TopicSet;
