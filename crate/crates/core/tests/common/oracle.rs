//! Brute-force reference implementations. Deliberately written from the
//! formulas without reusing any library code paths.

use std::collections::HashSet;

pub struct OracleRecord {
    pub id: String,
    pub timestamp: i64,
    pub embedding: Vec<f64>,
    pub topics: Vec<String>,
}

pub struct OracleHit {
    pub id: String,
    pub s_sem: f64,
    pub s_top: f64,
    pub lambda: f64,
    pub s_overall: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn overlap(q: &[String], k: &[String]) -> f64 {
    let qs: HashSet<&String> = q.iter().collect();
    let ks: HashSet<&String> = k.iter().collect();
    if qs.is_empty() || ks.is_empty() {
        return 0.0;
    }
    let mut shared = 0usize;
    for t in &qs {
        if ks.contains(t) {
            shared += 1;
        }
    }
    (shared as f64 / qs.len() as f64 + shared as f64 / ks.len() as f64) / 2.0
}

/// Scores, filters on `s_sem > gamma`, and sorts by overall score, then
/// newer timestamp, then later position.
pub fn retrieve(
    records: &[OracleRecord],
    query: &[f64],
    query_topics: &[String],
    now: i64,
    gamma: f64,
    tau_hours: f64,
    top_k: usize,
) -> Vec<OracleHit> {
    let mut scored: Vec<(usize, OracleHit)> = Vec::new();
    for (pos, r) in records.iter().enumerate() {
        let s_sem = cosine(query, &r.embedding).max(0.0);
        if !(s_sem > gamma) {
            continue;
        }
        let s_top = overlap(query_topics, &r.topics);
        let hours = (now - r.timestamp) as f64 / 3600.0;
        let lambda = (-hours / tau_hours).exp();
        scored.push((pos, OracleHit { id: r.id.clone(), s_sem, s_top, lambda, s_overall: lambda * (s_sem + s_top) }));
    }
    // selection sort keeps the comparison explicit
    let mut out = Vec::new();
    while !scored.is_empty() && out.len() < top_k {
        let mut best = 0;
        for i in 1..scored.len() {
            let (pi, a) = &scored[i];
            let (pb, b) = &scored[best];
            let better = a.s_overall > b.s_overall
                || (a.s_overall == b.s_overall
                    && (records[*pi].timestamp > records[*pb].timestamp
                        || (records[*pi].timestamp == records[*pb].timestamp && pi > pb)));
            if better {
                best = i;
            }
        }
        out.push(scored.remove(best).1);
    }
    out
}

fn count_ngram(tokens: &[String], gram: &[String]) -> usize {
    let n = gram.len();
    let mut c = 0;
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            if tokens[i..i + n] == *gram {
                c += 1;
            }
        }
    }
    c
}

/// BLEU with optional add-one smoothing on orders ≥ 2.
pub fn bleu(hyp: &[String], reference: &[String], n: usize, smooth: bool) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for k in 1..=n {
        let mut matched = 0usize;
        let mut total = 0usize;
        if hyp.len() >= k {
            let mut seen: Vec<&[String]> = Vec::new();
            for i in 0..=hyp.len() - k {
                let gram = &hyp[i..i + k];
                total += 1;
                if seen.contains(&gram) {
                    continue;
                }
                seen.push(gram);
                matched += count_ngram(hyp, gram).min(count_ngram(reference, gram));
            }
        }
        let p = if smooth && k >= 2 {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        } else if total == 0 {
            0.0
        } else {
            matched as f64 / total as f64
        };
        product *= p;
    }
    if product == 0.0 {
        return 0.0;
    }
    let bp = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    product.powf(1.0 / n as f64) * bp
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// ROUGE-L F1 with the LCS found by enumerating subsequences of `hyp`.
pub fn rouge_l(hyp: &[String], reference: &[String]) -> f64 {
    assert!(hyp.len() <= 16);
    let mut lcs = 0;
    for mask in 0u32..(1 << hyp.len()) {
        let len = mask.count_ones() as usize;
        if len <= lcs {
            continue;
        }
        let sub: Vec<&String> = (0..hyp.len()).filter(|i| mask & (1 << i) != 0).map(|i| &hyp[i]).collect();
        if is_subsequence(&sub, reference) {
            lcs = len;
        }
    }
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hyp.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// METEOR-exact over every possible alignment.
pub fn meteor(hyp: &[String], reference: &[String]) -> f64 {
    fn walk(i: usize, hyp: &[String], reference: &[String], used: &mut Vec<bool>, pairs: &mut Vec<(usize, usize)>, best: &mut (usize, usize)) {
        if i == hyp.len() {
            let m = pairs.len();
            let mut chunks = 0;
            for (idx, &(h, r)) in pairs.iter().enumerate() {
                let continues = idx > 0 && pairs[idx - 1].0 + 1 == h && pairs[idx - 1].1 + 1 == r;
                if !continues {
                    chunks += 1;
                }
            }
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        walk(i + 1, hyp, reference, used, pairs, best);
        for j in 0..reference.len() {
            if !used[j] && reference[j] == hyp[i] {
                used[j] = true;
                pairs.push((i, j));
                walk(i + 1, hyp, reference, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut best = (0, usize::MAX);
    walk(0, hyp, reference, &mut vec![false; reference.len()], &mut Vec::new(), &mut best);
    let (m, chunks) = best;
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    f * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
}
