//! Sentence-level generation metrics.
//!
//! METEOR here is the exact-match variant: no stemming or synonym stages.
//! Alignments maximise the number of matched unigrams and, among those,
//! minimise the number of chunks.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topics::tokenize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("prediction and gold lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no labels to score")]
    EmptyInput,
}

/// Tokens used by every metric: lowercase alphanumeric runs.
pub fn metric_tokens(text: &str) -> Vec<String> {
    tokenize(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Smoothing {
    None,
    /// Add one to numerator and denominator of every precision of order ≥ 2.
    #[default]
    AddOne,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the hypothesis n-gram total.
fn modified_precision_parts<T: Eq + Hash>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let hyp_counts = ngram_counts(hyp, n);
    let ref_counts = ngram_counts(reference, n);
    let matched = hyp_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

/// BLEU-N of one hypothesis against one reference.
pub fn bleu_n<T: Eq + Hash>(hyp: &[T], reference: &[T], n: usize, smoothing: Smoothing) -> f64 {
    assert!(n >= 1, "BLEU order must be at least 1");
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (matched, total) = modified_precision_parts(hyp, reference, k);
        let p = match smoothing {
            Smoothing::AddOne if k >= 2 => (matched as f64 + 1.0) / (total as f64 + 1.0),
            _ if total == 0 => 0.0,
            _ => matched as f64 / total as f64,
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let geo = (log_sum / n as f64).exp();
    let (h, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if h >= r { 1.0 } else { (1.0 - r / h).exp() };
    geo * bp
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1.
pub fn rouge_l<T: Eq>(hyp: &[T], reference: &[T]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(hyp, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / hyp.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

const ALIGN_MEMO_LIMIT: usize = 1 << 14;

/// Exact search over unigram alignments; falls back to a greedy
/// adjacency-preferring alignment for very long or highly repetitive input.
pub fn align<T: Eq>(hyp: &[T], reference: &[T]) -> Alignment {
    if reference.len() <= 64 {
        let mut search = AlignSearch { hyp, reference, memo: HashMap::new(), overflow: false };
        let (matches, chunks) = search.best(0, None, 0);
        if !search.overflow {
            return Alignment { matches, chunks };
        }
    }
    greedy_align(hyp, reference)
}

struct AlignSearch<'a, T> {
    hyp: &'a [T],
    reference: &'a [T],
    memo: HashMap<(usize, Option<usize>, u64), (usize, usize)>,
    overflow: bool,
}

impl<T: Eq> AlignSearch<'_, T> {
    /// Best (matches, chunks) for `hyp[i..]`, where `prev` is the reference
    /// position aligned to `hyp[i-1]`, if it was aligned.
    fn best(&mut self, i: usize, prev: Option<usize>, used: u64) -> (usize, usize) {
        if i == self.hyp.len() || self.overflow {
            return (0, 0);
        }
        if let Some(&v) = self.memo.get(&(i, prev, used)) {
            return v;
        }
        let mut best = self.best(i + 1, None, used);
        for j in 0..self.reference.len() {
            if used & (1 << j) != 0 || self.reference[j] != self.hyp[i] {
                continue;
            }
            let (m, c) = self.best(i + 1, Some(j), used | (1 << j));
            let extends = prev.is_some_and(|p| p + 1 == j);
            let candidate = (m + 1, c + usize::from(!extends));
            if candidate.0 > best.0 || (candidate.0 == best.0 && candidate.1 < best.1) {
                best = candidate;
            }
        }
        if self.memo.len() >= ALIGN_MEMO_LIMIT {
            self.overflow = true;
        }
        self.memo.insert((i, prev, used), best);
        best
    }
}

fn greedy_align<T: Eq>(hyp: &[T], reference: &[T]) -> Alignment {
    let mut used = vec![false; reference.len()];
    let mut prev: Option<usize> = None;
    let (mut matches, mut chunks) = (0, 0);
    for tok in hyp {
        let next = prev.map(|p| p + 1).filter(|&j| j < reference.len() && !used[j] && reference[j] == *tok);
        let pick = next.or_else(|| (0..reference.len()).find(|&j| !used[j] && reference[j] == *tok));
        match pick {
            Some(j) => {
                used[j] = true;
                matches += 1;
                if next.is_none() {
                    chunks += 1;
                }
                prev = Some(j);
            }
            None => prev = None,
        }
    }
    Alignment { matches, chunks }
}

/// Scores an alignment with `F_mean = 10PR/(R+9P)` and the fragmentation
/// penalty `0.5·(chunks/m)³`.
pub fn meteor_from_alignment(alignment: Alignment, hyp_len: usize, ref_len: usize) -> f64 {
    let m = alignment.matches as f64;
    if alignment.matches == 0 {
        return 0.0;
    }
    let p = m / hyp_len as f64;
    let r = m / ref_len as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (alignment.chunks as f64 / m).powi(3);
    f_mean * (1.0 - penalty)
}

pub fn meteor<T: Eq>(hyp: &[T], reference: &[T]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    meteor_from_alignment(align(hyp, reference), hyp.len(), reference.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraitLabel {
    Trait,
    NoTrait,
}

impl TraitLabel {
    pub fn of(traits: &[String]) -> Self {
        if traits.is_empty() {
            TraitLabel::NoTrait
        } else {
            TraitLabel::Trait
        }
    }
}

/// Binary has-trait / no-trait accuracy.
pub fn persona_acc(predictions: &[TraitLabel], golds: &[TraitLabel]) -> Result<f64, MetricError> {
    if predictions.len() != golds.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), golds.len()));
    }
    if predictions.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceScores {
    pub bl2: f64,
    pub bl3: f64,
    pub rl: f64,
    pub met: f64,
}

/// All response metrics for one hypothesis/reference pair of raw strings.
pub fn score_response(hypothesis: &str, reference: &str) -> SentenceScores {
    let h = metric_tokens(hypothesis);
    let r = metric_tokens(reference);
    SentenceScores {
        bl2: bleu_n(&h, &r, 2, Smoothing::AddOne),
        bl3: bleu_n(&h, &r, 3, Smoothing::AddOne),
        rl: rouge_l(&h, &r),
        met: meteor(&h, &r),
    }
}
