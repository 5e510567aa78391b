//! Embedding-based greedy matching similarity (BERTScore style).
//!
//! Each token of one side is matched to its most similar token on the other
//! side by cosine similarity. Recall averages the best matches of reference
//! tokens, precision those of candidate tokens, optionally weighted by IDF.
//! Embeddings come from an [`EmbeddingProvider`]; the crate ships
//! [`HashedTrigramProvider`], a deterministic offline stand-in for a
//! contextual encoder.

use std::collections::{HashMap, HashSet};

use super::overlap::Prf;

#[derive(Debug, thiserror::Error)]
#[error("embedding provider failed: {0}")]
pub struct ProviderError(pub String);

/// Maps tokens to fixed-dimension vectors, one per input token.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

/// Random projection of character-trigram counts.
///
/// Each padded trigram of a token (`^ca`, `cat`, `at$` for "cat") seeds a
/// SplitMix64 stream that yields a ±1 vector; a token's embedding is the sum
/// over its trigrams. Identical tokens get identical vectors and tokens that
/// share trigrams point in similar directions.
#[derive(Clone, Debug)]
pub struct HashedTrigramProvider {
    dim: usize,
    seed: u64,
}

impl Default for HashedTrigramProvider {
    fn default() -> Self {
        Self { dim: 256, seed: 0x5eed }
    }
}

impl HashedTrigramProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    fn embed_token(&self, token: &str) -> Vec<f32> {
        let padded: Vec<char> = std::iter::once('^').chain(token.chars()).chain(std::iter::once('$')).collect();
        let mut v = vec![0f32; self.dim];
        let grams: Vec<String> = if padded.len() < 3 {
            vec![padded.iter().collect()]
        } else {
            padded.windows(3).map(|w| w.iter().collect()).collect()
        };
        for gram in grams {
            let mut state = fnv1a(gram.as_bytes()) ^ self.seed;
            let mut bits = 0u64;
            for (i, slot) in v.iter_mut().enumerate() {
                if i % 64 == 0 {
                    bits = splitmix64(&mut state);
                }
                *slot += if bits & 1 == 1 { 1.0 } else { -1.0 };
                bits >>= 1;
            }
        }
        v
    }
}

impl EmbeddingProvider for HashedTrigramProvider {
    fn name(&self) -> &str {
        "hashed-trigram"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(tokens.iter().map(|t| self.embed_token(t)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    if a == b {
        return if a.iter().any(|x| *x != 0.0) { 1.0 } else { 0.0 };
    }
    let mut dot = 0f64;
    let mut na = 0f64;
    let mut nb = 0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Inverse document frequency weights, `ln((M + 1) / (df + 1))` over `M`
/// reference documents. Unseen tokens get `ln(M + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdfWeights {
    weights: HashMap<String, f64>,
    unseen: f64,
}

impl IdfWeights {
    pub fn from_documents<T: AsRef<str>>(documents: &[Vec<T>]) -> Self {
        let m = documents.len() as f64;
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            let unique: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
            for token in unique {
                *df.entry(token.to_string()).or_default() += 1;
            }
        }
        let weights = df.into_iter().map(|(t, n)| (t, ((m + 1.0) / (n as f64 + 1.0)).ln())).collect();
        Self { weights, unseen: (m + 1.0).ln() }
    }

    pub fn weight(&self, token: &str) -> f64 {
        self.weights.get(token).copied().unwrap_or(self.unseen)
    }
}

/// Greedy-matching precision/recall/F1 between token sequences.
pub fn semantic_f1(
    candidate: &[String],
    reference: &[String],
    provider: &dyn EmbeddingProvider,
    idf: Option<&IdfWeights>,
) -> Result<Prf, ProviderError> {
    if candidate.is_empty() || reference.is_empty() {
        return Ok(Prf::degenerate());
    }
    let cand = provider.embed(candidate)?;
    let refs = provider.embed(reference)?;
    if cand.len() != candidate.len() || refs.len() != reference.len() {
        return Err(ProviderError(format!("{} returned the wrong number of vectors", provider.name())));
    }
    let sims: Vec<Vec<f64>> = cand.iter().map(|c| refs.iter().map(|r| cosine(c, r)).collect()).collect();
    let best_for_cand: Vec<f64> =
        sims.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let best_for_ref: Vec<f64> = (0..refs.len())
        .map(|j| sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let precision = weighted_mean(&best_for_cand, candidate, idf);
    let recall = weighted_mean(&best_for_ref, reference, idf);
    Ok(Prf::new(precision, recall))
}

fn weighted_mean(values: &[f64], tokens: &[String], idf: Option<&IdfWeights>) -> f64 {
    if let Some(idf) = idf {
        let weights: Vec<f64> = tokens.iter().map(|t| idf.weight(t)).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            return values.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / total;
        }
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::eval::tokenize;

    /// One-hot vectors per distinct token: every pair of distinct tokens is
    /// orthogonal.
    pub(crate) struct OneHot;

    impl EmbeddingProvider for OneHot {
        fn name(&self) -> &str {
            "one-hot"
        }
        fn dim(&self) -> usize {
            64
        }
        fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
            Ok(tokens
                .iter()
                .map(|t| {
                    let mut v = vec![0f32; 64];
                    v[(fnv1a(t.as_bytes()) % 64) as usize] = 1.0;
                    v
                })
                .collect())
        }
    }

    #[test]
    fn identical_texts_score_one() {
        let toks = tokenize("I mostly agree with the policy.");
        let p = semantic_f1(&toks, &toks, &HashedTrigramProvider::default(), None).unwrap();
        assert_eq!(p.f1, 1.0);
        let p = semantic_f1(&toks, &toks, &OneHot, None).unwrap();
        assert_eq!(p.f1, 1.0);
    }

    #[test]
    fn orthogonal_disjoint_texts_score_zero() {
        let a = vec!["apple".to_string()];
        let b = vec!["zebra".to_string()];
        assert_ne!(fnv1a(b"apple") % 64, fnv1a(b"zebra") % 64);
        assert_eq!(semantic_f1(&a, &b, &OneHot, None).unwrap().f1, 0.0);
    }

    #[test]
    fn symmetric_without_idf() {
        let a = tokenize("the clinic staff were kind and quick");
        let b = tokenize("staff at my clinic are friendly");
        let provider = HashedTrigramProvider::default();
        let ab = semantic_f1(&a, &b, &provider, None).unwrap();
        let ba = semantic_f1(&b, &a, &provider, None).unwrap();
        assert_eq!(ab.f1, ba.f1);
        assert_eq!(ab.precision, ba.recall);
    }

    #[test]
    fn empty_side_is_degenerate() {
        let a = tokenize("something");
        let p = semantic_f1(&a, &[], &HashedTrigramProvider::default(), None).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.f1, 0.0);
    }

    #[test]
    fn shared_trigrams_raise_similarity() {
        let p = HashedTrigramProvider::default();
        let v = p.embed(&["satisfied".into(), "dissatisfied".into(), "bicycle".into()]).unwrap();
        assert!(cosine(&v[0], &v[1]) > cosine(&v[0], &v[2]));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn idf_downweights_common_tokens() {
        let docs = vec![tokenize("the cat"), tokenize("the dog"), tokenize("the bird")];
        let idf = IdfWeights::from_documents(&docs);
        assert!(idf.weight("the") < idf.weight("cat"));
        assert!((idf.weight("unseen") - 4f64.ln()).abs() < 1e-12);
    }
}
