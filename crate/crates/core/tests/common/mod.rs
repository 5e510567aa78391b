//! Reference implementations written from the metric definitions, kept
//! deliberately naive: n-grams are compared as slices by linear scans, LCS
//! uses a full table or plain enumeration of subsequences.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn ngrams(tokens: &[String], n: usize) -> Vec<&[String]> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| &tokens[i..i + n]).collect()
}

fn count(list: &[&[String]], gram: &[String]) -> usize {
    list.iter().filter(|g| **g == gram).count()
}

/// Sum over distinct candidate n-grams of min(count in cand, count in ref).
pub fn clipped(cand: &[String], reference: &[String], n: usize) -> usize {
    let c = ngrams(cand, n);
    let r = ngrams(reference, n);
    let mut seen: Vec<&[String]> = Vec::new();
    let mut total = 0;
    for g in &c {
        if seen.contains(g) {
            continue;
        }
        seen.push(g);
        total += count(&c, g).min(count(&r, g));
    }
    total
}

pub fn bleu(cand: &[String], reference: &[String], max_n: usize) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let order = max_n.min(cand.len()).min(reference.len());
    let mut log_sum = 0.0;
    for n in 1..=order {
        let m = clipped(cand, reference, n);
        let total = ngrams(cand, n).len() as f64;
        let p = if m > 0 {
            m as f64 / total
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (2.0 * total)
        };
        log_sum += p.ln();
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / order as f64).exp()
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// (precision, recall, f1)
pub fn rouge_n(cand: &[String], reference: &[String], n: usize) -> (f64, f64, f64) {
    if cand.is_empty() || reference.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let order = n.min(cand.len()).min(reference.len());
    let m = clipped(cand, reference, order) as f64;
    let p = m / ngrams(cand, order).len() as f64;
    let r = m / ngrams(reference, order).len() as f64;
    (p, r, f1(p, r))
}

/// Full (|a|+1) x (|b|+1) table.
pub fn lcs_table(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    t[a.len()][b.len()]
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|x| it.any(|y| y == *x))
}

/// Longest subsequence of `a` (all 2^|a| of them) that is also a
/// subsequence of `b`.
pub fn lcs_exhaustive(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16, "exhaustive LCS is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if is_subsequence(&sub, b) {
            best = size;
        }
    }
    best
}

pub fn rouge_l(cand: &[String], reference: &[String]) -> (f64, f64, f64) {
    if cand.is_empty() || reference.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let l = lcs_table(cand, reference) as f64;
    let (p, r) = (l / cand.len() as f64, l / reference.len() as f64);
    (p, r, f1(p, r))
}

pub fn distinct_n(texts: &[Vec<String>], n: usize) -> f64 {
    let all: Vec<&[String]> = texts.iter().flat_map(|t| ngrams(t, n)).collect();
    if all.is_empty() {
        return 0.0;
    }
    let mut unique: Vec<&[String]> = Vec::new();
    for g in &all {
        if !unique.contains(g) {
            unique.push(g);
        }
    }
    unique.len() as f64 / all.len() as f64
}

pub const VOCAB: &[&str] = &[
    "i", "we", "the", "a", "good", "bad", "agree", "disagree", "often", "never", "work", "health", "money", "yes",
    "no", "very", "not", "it", "is", "my",
];

/// A random token sequence of length `0..=max_len` over a small vocabulary,
/// so candidate and reference share n-grams often.
pub fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<String> {
    let len = rng.random_range(0..=max_len);
    let vocab = &VOCAB[..rng.random_range(3..=VOCAB.len())];
    (0..len).map(|_| vocab.choose(rng).unwrap().to_string()).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}
