//! Seeded random memory banks for oracle comparisons.

use longdial::clock::Timestamp;
use longdial::embedding::EmbeddingVector;
use longdial::memory::{retrieve, EventRecord, LongTermMemoryBank, RetrievalConfig};
use longdial::topics::extract_topics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{self, OracleRecord};
use super::FixedEncoder;

pub const VOCAB: [&str; 10] = ["pool", "guitar", "puppy", "garden", "paris", "chess", "coffee", "novel", "bike", "piano"];

pub struct Case {
    pub bank: LongTermMemoryBank,
    pub oracle_records: Vec<OracleRecord>,
    pub query_text: String,
    pub query_vec: Vec<f64>,
    pub now: i64,
    pub cfg: RetrievalConfig,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn random_topics(rng: &mut ChaCha8Rng) -> Vec<String> {
    VOCAB.iter().filter(|_| rng.gen_bool(0.3)).map(|s| s.to_string()).collect()
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.gen_range(1..=16);
    let n = rng.gen_range(0..=64);
    let query_vec = random_unit(&mut rng, dim);
    let mut ts = 1_700_000_000i64;
    let mut bank = LongTermMemoryBank::new("oracle");
    let mut oracle_records = Vec::new();
    for i in 0..n {
        ts += rng.gen_range(0..200_000);
        let duplicate = i > 0 && rng.gen_bool(0.1);
        let (emb, topics) = if duplicate {
            let prev: &OracleRecord = &oracle_records[oracle_records.len() - 1];
            ts = prev.timestamp.max(ts - rng.gen_range(0..2) * ts);
            (prev.embedding.clone(), prev.topics.clone())
        } else if rng.gen_bool(0.5) {
            // near the query so some records clear the threshold
            let noise = random_unit(&mut rng, dim);
            let w: f64 = rng.gen_range(0.0..1.0);
            let mixed: Vec<f64> = query_vec.iter().zip(&noise).map(|(q, e)| q + w * e).collect();
            let norm = mixed.iter().map(|x| x * x).sum::<f64>().sqrt();
            (if norm < 1e-9 { query_vec.clone() } else { mixed }, random_topics(&mut rng))
        } else {
            (random_unit(&mut rng, dim), random_topics(&mut rng))
        };
        let id = format!("r{i:03}");
        bank.push(EventRecord {
            record_id: id.clone(),
            timestamp: Timestamp(ts),
            summary: format!("summary {i}"),
            embedding: EmbeddingVector::normalized(emb.clone()).unwrap(),
            topics: topics.iter().cloned().collect(),
            source_session: 1,
        })
        .unwrap();
        let stored = bank.records().last().unwrap().embedding.values().to_vec();
        oracle_records.push(OracleRecord { id, timestamp: ts, embedding: stored, topics });
    }
    let query_words: Vec<&str> = VOCAB.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
    let query_text = if query_words.is_empty() { "what about it".to_owned() } else { query_words.join(" ") };
    let cfg = RetrievalConfig {
        gamma: rng.gen_range(0.0..0.6),
        tau_hours: rng.gen_range(1.0..500.0),
        top_k: rng.gen_range(1..=6),
        beta_secs: 3600.0,
    };
    let now = ts + rng.gen_range(0..1_000_000);
    Case { bank, oracle_records, query_text, query_vec, now, cfg }
}

/// Runs `retrieve` on the bank for `seed` and compares it with the oracle.
/// Returns the number of hits on agreement.
pub fn check_against_oracle(seed: u64) -> Result<usize, String> {
    let case = random_case(seed);
    let q = EmbeddingVector::normalized(case.query_vec.clone()).unwrap();
    let encoder = FixedEncoder::single(&case.query_text, q.clone());
    let got = retrieve(&case.bank, &case.query_text, Timestamp(case.now), &case.cfg, &encoder).map_err(|e| e.to_string())?;
    let query_topics: Vec<String> = extract_topics(&case.query_text).iter().map(str::to_owned).collect();
    let want = oracle::retrieve(
        &case.oracle_records,
        q.values(),
        &query_topics,
        case.now,
        case.cfg.gamma,
        case.cfg.tau_hours,
        case.cfg.top_k,
    );
    let got_ids: Vec<&str> = got.hits.iter().map(|h| h.record.record_id.as_str()).collect();
    let want_ids: Vec<&str> = want.iter().map(|h| h.id.as_str()).collect();
    if got_ids != want_ids {
        return Err(format!("seed {seed}: got {got_ids:?}, oracle {want_ids:?}"));
    }
    if got.sentinel != want.is_empty() {
        return Err(format!("seed {seed}: sentinel flag {}", got.sentinel));
    }
    for (g, w) in got.hits.iter().zip(&want) {
        let diffs = [
            g.scores.s_sem - w.s_sem,
            g.scores.s_top - w.s_top,
            g.scores.lambda_t - w.lambda,
            g.scores.s_overall - w.s_overall,
        ];
        if diffs.iter().any(|d| d.abs() >= 1e-12) {
            return Err(format!("seed {seed}: score mismatch on {}: {diffs:?}", w.id));
        }
    }
    Ok(want.len())
}
