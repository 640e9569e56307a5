//! Corpus replay and scoring.
//!
//! Session 1 of every dialogue only initializes memory and personas. In
//! later sessions each agent turn that follows a user turn is regenerated
//! from the gold history and scored against the gold reply, which is then
//! fed back into the conversation in place of the generated one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, AgentRuntime, Conversation, ModuleSet};
use crate::clock::Timestamp;
use crate::corpus::MultiSessionDialogue;
use crate::generation::generate_response;
use crate::metrics::{score_response, SentenceScores};
use crate::persona::Character;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("dialogue {0} has fewer than two sessions")]
    TooFewSessions(String),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Clock value at the first turn of every dialogue.
    pub start: Timestamp,
    /// Seconds between consecutive turns inside a session.
    pub turn_spacing_secs: i64,
    /// Dialogues evaluated concurrently.
    pub parallelism: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { start: Timestamp(1_704_067_200), turn_spacing_secs: 60, parallelism: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub bl2: f64,
    pub bl3: f64,
    pub rl: f64,
    pub met: f64,
    pub responses: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub dialogue_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ablation: ModuleSet,
    /// Mean sentence-level scores keyed by 1-based session index (≥ 2).
    pub per_session: BTreeMap<u32, SessionMetrics>,
    pub dialogues_scored: usize,
    pub failures: Vec<EvalFailure>,
}

/// One scored agent turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTurn {
    pub session: u32,
    pub input: String,
    pub gold: String,
    pub generated: String,
    pub scores: SentenceScores,
}

/// Replays one dialogue and returns its scored turns.
pub fn evaluate_dialogue(
    dialogue: &MultiSessionDialogue,
    runtime: &AgentRuntime,
    settings: &EvalSettings,
) -> Result<Vec<ScoredTurn>, AgentError> {
    let mut conv = Conversation::new(&dialogue.dialogue_id, dialogue.user_name(), dialogue.agent_name(), Some(settings.start));
    let mut clock = settings.start;
    let mut scored = Vec::new();

    for (si, session) in dialogue.sessions.iter().enumerate() {
        let session_no = si as u32 + 1;
        if si > 0 {
            clock = clock.plus_seconds(session.gap_before as i64);
        }
        let mut pending_input: Option<&str> = None;
        for (ti, turn) in session.turns.iter().enumerate() {
            if ti > 0 {
                clock = clock.plus_seconds(settings.turn_spacing_secs);
            }
            conv.set_clock(clock);
            let speaker = if turn.speaker == dialogue.user_name() { Character::User } else { Character::Agent };
            match speaker {
                Character::User => {
                    runtime.observe(&mut conv, Character::User, &turn.text, clock)?;
                    runtime.update_persona(&mut conv, Character::User, &turn.text, clock)?;
                    pending_input = Some(&turn.text);
                }
                Character::Agent => {
                    if let Some(input) = pending_input.take().filter(|_| si > 0) {
                        let memories = runtime.retrieve_for(&mut conv, input, clock)?;
                        let prompt = runtime.compose_prompt(&conv, input, &memories)?;
                        let generated = generate_response(&prompt, runtime.model.as_ref())?;
                        scored.push(ScoredTurn {
                            session: session_no,
                            input: input.to_owned(),
                            gold: turn.text.clone(),
                            scores: score_response(&generated, &turn.text),
                            generated,
                        });
                    }
                    runtime.observe(&mut conv, Character::Agent, &turn.text, clock)?;
                    runtime.update_persona(&mut conv, Character::Agent, &turn.text, clock)?;
                }
            }
        }
    }
    Ok(scored)
}

/// Evaluates every dialogue under `runtime.modules`. Dialogues that fail
/// are recorded in the report and contribute no scores.
pub fn run_eval(
    corpus: &[MultiSessionDialogue],
    runtime: &AgentRuntime,
    settings: &EvalSettings,
) -> Result<MetricReport, EvalError> {
    use rayon::prelude::*;

    if let Some(d) = corpus.iter().find(|d| d.sessions.len() < 2) {
        return Err(EvalError::TooFewSessions(d.dialogue_id.clone()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallelism.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let outcomes: Vec<_> =
        pool.install(|| corpus.par_iter().map(|d| (d, evaluate_dialogue(d, runtime, settings))).collect());

    let mut sums: BTreeMap<u32, (SentenceScores, usize)> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut dialogues_scored = 0;
    for (dialogue, outcome) in outcomes {
        match outcome {
            Ok(turns) => {
                dialogues_scored += 1;
                for t in turns {
                    let (acc, n) = sums
                        .entry(t.session)
                        .or_insert((SentenceScores { bl2: 0.0, bl3: 0.0, rl: 0.0, met: 0.0 }, 0));
                    acc.bl2 += t.scores.bl2;
                    acc.bl3 += t.scores.bl3;
                    acc.rl += t.scores.rl;
                    acc.met += t.scores.met;
                    *n += 1;
                }
            }
            Err(e) => failures.push(EvalFailure { dialogue_id: dialogue.dialogue_id.clone(), error: e.to_string() }),
        }
    }
    let per_session = sums
        .into_iter()
        .map(|(s, (acc, n))| {
            let d = n as f64;
            (s, SessionMetrics { bl2: acc.bl2 / d, bl3: acc.bl3 / d, rl: acc.rl / d, met: acc.met / d, responses: n })
        })
        .collect();
    Ok(MetricReport { ablation: runtime.modules, per_session, dialogues_scored, failures })
}

/// One report per ablation row, laid out like a module ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<MetricReport>,
}

impl AblationTable {
    pub fn sessions(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.rows.iter().flat_map(|r| r.per_session.keys().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Columns: `modules`, then `BL-2`, `BL-3`, `R-L` for each session.
    pub fn to_csv(&self) -> String {
        let sessions = self.sessions();
        let mut out = String::from("modules");
        for s in &sessions {
            out.push_str(&format!(",S{s} BL-2,S{s} BL-3,S{s} R-L"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("\"{}\"", row.ablation));
            for s in &sessions {
                match row.per_session.get(s) {
                    Some(m) => out.push_str(&format!(",{:.4},{:.4},{:.4}", m.bl2 * 100.0, m.bl3 * 100.0, m.rl * 100.0)),
                    None => out.push_str(",,,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs [`run_eval`] once per module set.
pub fn run_ablation(
    corpus: &[MultiSessionDialogue],
    runtime: &AgentRuntime,
    rows: &[ModuleSet],
    settings: &EvalSettings,
) -> Result<AblationTable, EvalError> {
    let rows = rows
        .iter()
        .map(|m| run_eval(corpus, &runtime.clone().with_modules(*m), settings))
        .collect::<Result<_, _>>()?;
    Ok(AblationTable { rows })
}
