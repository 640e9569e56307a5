//! Fixed inputs for the golden prompt renders.

use longdial::clock::Timestamp;
use longdial::generation::{assemble_prompt, PromptVariant};
use longdial::memory::{summary_prompt, CacheEntry, EventRecord, RetrievalHit, RetrievalResult, ScoreBreakdown, ShortTermCache};
use longdial::persona::{extraction_prompt, Character, ExtractionStyle, PersonaBank};
use longdial::prompts::PromptTemplates;

pub const GOLDEN_NAMES: [&str; 4] = ["event_summary", "persona_extract", "response_base", "response_agent"];

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/golden/{name}.txt", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn layout(system: &str, user: &str) -> String {
    format!("[system]\n{system}\n[user]\n{user}\n")
}

fn context() -> Vec<CacheEntry> {
    vec![
        CacheEntry::new(Timestamp(1_704_100_000), "Alice", "I adopted a puppy."),
        CacheEntry::new(Timestamp(1_704_100_060), "Bob", "How exciting!"),
    ]
}

const INPUT: &str = "She chewed my shoes today.";

/// First placeholder or stray brace left in `text`, if any.
pub fn leftover_placeholder(text: &str) -> Option<String> {
    text.find('{').map(|i| text[i..].chars().take(20).collect())
}

/// Renders the fixture for `name` with the built-in templates.
pub fn render(name: &str) -> String {
    let templates = PromptTemplates::builtin();
    match name {
        "event_summary" => {
            let mut cache = ShortTermCache::new();
            for e in context() {
                cache.push(e).unwrap();
            }
            let (s, u) = summary_prompt(&cache, "Alice", "Bob", &templates).unwrap();
            layout(&s, &u)
        }
        "persona_extract" => {
            let (s, u) = extraction_prompt(INPUT, &templates, ExtractionStyle::Direct).unwrap();
            layout(&s, &u)
        }
        "response_base" => {
            let pu = PersonaBank::new(Character::User, "Alice");
            let pa = PersonaBank::new(Character::Agent, "Bob");
            let b = assemble_prompt(&templates, "Alice", "Bob", &context(), &RetrievalResult::none(), &pu, &pa, INPUT).unwrap();
            assert_eq!(b.variant, PromptVariant::Base);
            layout(&b.system_text, &b.user_text)
        }
        "response_agent" => {
            let mut pu = PersonaBank::new(Character::User, "Alice");
            pu.update(&["I have a puppy.".into()], "u1", Timestamp(0));
            let mut pa = PersonaBank::new(Character::Agent, "Bob");
            pa.update(&["I love dogs.".into()], "u2", Timestamp(0));
            let memories = RetrievalResult {
                hits: vec![RetrievalHit {
                    record: EventRecord {
                        record_id: "evt-00001".into(),
                        timestamp: Timestamp(1_704_067_200),
                        summary: "Alice adopted a puppy named Biscuit.".into(),
                        embedding: super::unit(&[1.0, 1.0]),
                        topics: Default::default(),
                        source_session: 1,
                    },
                    scores: ScoreBreakdown { s_sem: 0.8, s_top: 0.2, lambda_t: 0.9, s_overall: 0.9 },
                }],
                sentinel: false,
            };
            let b = assemble_prompt(&templates, "Alice", "Bob", &context(), &memories, &pu, &pa, INPUT).unwrap();
            assert_eq!(b.variant, PromptVariant::Agent);
            layout(&b.system_text, &b.user_text)
        }
        other => panic!("no golden fixture named {other}"),
    }
}

/// Literal passages every shipped template set must carry.
pub fn required_phrases(t: &PromptTemplates) -> Vec<(&'static str, bool)> {
    vec![
        ("base word limit", t.response_base.user.contains("(maximum 30 words, must be in English)")),
        ("agent word limit", t.response_agent.user.contains("(maximum 30 words, must be in English)")),
        (
            "trait few-shot",
            t.persona_extract.user.contains("Extracted Traits: I now work elsewhere. I used to be in the military."),
        ),
        ("NO_TRAIT few-shot", t.persona_extract.user.contains("\n\nNO_TRAIT\n\n")),
        ("summary instruction", t.event_summary.user.contains("please summarize the main points")),
        ("cot NO_TRAIT", t.persona_extract_cot.user.contains("NO_TRAIT")),
    ]
}
