//! Surface-overlap metrics over token sequences: BLEU, ROUGE-N, ROUGE-L and
//! Distinct-n.
//!
//! Short texts: when the candidate or the reference has fewer tokens than
//! the requested n-gram order, BLEU and ROUGE-N fall back to the longest
//! order both sides support. A one-word answer compared with itself scores
//! 1.0 instead of being undefined.

use std::collections::HashMap;

use super::tokenize;

/// Sentence BLEU with its components.
#[derive(Clone, Debug, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    /// Precision used for each order, after smoothing.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    /// Empty candidate or reference.
    pub degenerate: bool,
}

/// Precision, recall and their harmonic mean.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

impl Prf {
    pub(crate) fn new(precision: f64, recall: f64) -> Self {
        let precision = precision.clamp(0.0, 1.0);
        let recall = recall.clamp(0.0, 1.0);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Prf { precision, recall, f1, degenerate: false }
    }

    pub(crate) fn degenerate() -> Self {
        Prf { degenerate: true, ..Prf::default() }
    }
}

/// Ratio with a flag for inputs that admit no n-grams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub degenerate: bool,
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

fn clipped_matches<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> usize {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    cand.iter().map(|(gram, c)| (*c).min(refs.get(gram).copied().unwrap_or(0))).sum()
}

/// BLEU on raw text; see [`bleu_tokens`].
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> BleuScore {
    bleu_tokens(&tokenize(candidate), &tokenize(reference), max_n)
}

/// Sentence BLEU: geometric mean of clipped n-gram precisions times the
/// brevity penalty `exp(1 - r/c)` when the candidate is shorter.
///
/// A zero precision at order n ≥ 2 is replaced by `1 / (2 * candidate
/// n-gram count)`. No unigram overlap at all scores 0.
pub fn bleu_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T], max_n: usize) -> BleuScore {
    let c = candidate.len();
    let r = reference.len();
    if c == 0 || r == 0 || max_n == 0 {
        return BleuScore { score: 0.0, precisions: Vec::new(), brevity_penalty: 0.0, degenerate: true };
    }
    let order = max_n.min(c).min(r);
    let brevity_penalty = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    let mut precisions = Vec::with_capacity(order);
    for n in 1..=order {
        let total = c + 1 - n;
        let matches = clipped_matches(candidate, reference, n);
        if matches == 0 {
            if n == 1 {
                return BleuScore { score: 0.0, precisions: vec![0.0], brevity_penalty, degenerate: false };
            }
            precisions.push(1.0 / (2.0 * total as f64));
        } else {
            precisions.push(matches as f64 / total as f64);
        }
    }
    let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / order as f64;
    let score = (brevity_penalty * log_mean.exp()).clamp(0.0, 1.0);
    BleuScore { score, precisions, brevity_penalty, degenerate: false }
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Prf {
    rouge_n_tokens(&tokenize(candidate), &tokenize(reference), n)
}

/// Clipped n-gram overlap; precision over candidate n-grams, recall over
/// reference n-grams.
pub fn rouge_n_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> Prf {
    let c = candidate.len();
    let r = reference.len();
    if c == 0 && r == 0 {
        return Prf::degenerate();
    }
    if c == 0 || r == 0 || n == 0 {
        return Prf::new(0.0, 0.0);
    }
    let order = n.min(c).min(r);
    let overlap = clipped_matches(candidate, reference, order) as f64;
    Prf::new(overlap / (c + 1 - order) as f64, overlap / (r + 1 - order) as f64)
}

pub fn rouge_l(candidate: &str, reference: &str) -> Prf {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

/// Longest-common-subsequence overlap.
pub fn rouge_l_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Prf {
    let c = candidate.len();
    let r = reference.len();
    if c == 0 && r == 0 {
        return Prf::degenerate();
    }
    if c == 0 || r == 0 {
        return Prf::new(0.0, 0.0);
    }
    let lcs = lcs_len(candidate, reference) as f64;
    Prf::new(lcs / c as f64, lcs / r as f64)
}

/// LCS length with a two-row table.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Distinct n-grams over total n-grams across a corpus of texts.
pub fn distinct_n(texts: &[&str], n: usize) -> Ratio {
    let tokenized: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    distinct_n_tokens(&tokenized, n)
}

pub fn distinct_n_tokens<T: AsRef<str>>(texts: &[Vec<T>], n: usize) -> Ratio {
    let mut seen: HashMap<Vec<&str>, ()> = HashMap::new();
    let mut total = 0usize;
    for tokens in texts {
        for (gram, count) in ngram_counts(tokens, n) {
            total += count;
            seen.insert(gram, ());
        }
    }
    if total == 0 {
        return Ratio { value: 0.0, degenerate: true };
    }
    Ratio { value: seen.len() as f64 / total as f64, degenerate: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bleu_hand_example() {
        let s = bleu("the cat sat on the mat", "the cat is on the mat", 4);
        let expected = [5.0 / 6.0, 3.0 / 5.0, 1.0 / 4.0, 1.0 / 6.0];
        for (p, e) in s.precisions.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
        assert_eq!(s.brevity_penalty, 1.0);
        // (5/6 * 3/5 * 1/4 * 1/6)^(1/4)
        assert!((s.score - 0.379_918).abs() < 1e-6, "{}", s.score);
        assert_eq!(format!("{:.3}", s.score), "0.380");
    }

    #[test]
    fn bleu_identity_and_edges() {
        assert_eq!(bleu("we agree", "we agree", 4).score, 1.0);
        assert_eq!(bleu("Yes.", "yes", 4).score, 1.0);
        let empty = bleu("", "something", 4);
        assert!(empty.degenerate);
        assert_eq!(empty.score, 0.0);
        assert_eq!(bleu("alpha beta gamma delta", "one two three four", 4).score, 0.0);
    }

    #[test]
    fn bleu_brevity_penalty() {
        let s = bleu("the cat", "the cat sat down", 4);
        assert!((s.brevity_penalty - (1.0f64 - 2.0).exp()).abs() < 1e-12);
        assert!((s.score - s.brevity_penalty).abs() < 1e-12);
    }

    #[test]
    fn rouge_hand_examples() {
        let p = rouge_n("the cat sat", "the cat", 1);
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.recall, 1.0);
        assert!((p.f1 - 0.8).abs() < 1e-12);
        let id = rouge_n("some words here", "some words here", 2);
        assert_eq!((id.precision, id.recall, id.f1), (1.0, 1.0, 1.0));
        let disjoint = rouge_n("a b c", "d e f", 1);
        assert_eq!((disjoint.precision, disjoint.recall, disjoint.f1), (0.0, 0.0, 0.0));
        assert!(rouge_n("", "", 1).degenerate);
    }

    #[test]
    fn rouge_l_hand_examples() {
        let p = rouge_l("a b c d", "a c d");
        assert_eq!(p.precision, 0.75);
        assert_eq!(p.recall, 1.0);
        assert!((p.f1 - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(rouge_l("x y z", "x y z").f1, 1.0);
        assert_eq!(lcs_len(&["a", "b", "c", "d"], &["d", "c", "b", "a"]), 1);
    }

    #[test]
    fn distinct_examples() {
        let d = distinct_n(&["a b a b"], 2);
        assert!((d.value - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(distinct_n(&["one two three"], 1).value, 1.0);
        assert_eq!(distinct_n(&["go go go go go"], 1).value, 0.2);
        assert!(distinct_n(&["single"], 2).degenerate);
    }
}
