//! Per-example evaluation: overlap, semantic and survey-specific metrics.

pub mod overlap;
pub mod semantic;
pub mod survey;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ChatRecord;
use crate::question_bank::{Domain, QuestionType, SurveyQuestion};

pub use overlap::{bleu, distinct_n, lcs_len, rouge_l, rouge_n, BleuScore, Prf, Ratio};
pub use semantic::{semantic_f1, EmbeddingProvider, HashedTrigramProvider, IdfWeights, ProviderError};
pub use survey::{
    count_sentences, length_similarity, sentence_count_similarity, sentiment_score, sentiment_similarity,
    survey_quality, LexiconError, QualityConfig, SentimentLexicon,
};

/// Lowercased maximal runs of alphanumeric characters. Punctuation and
/// whitespace separate tokens and are dropped.
///
/// ```
/// use persona_survey::eval::tokenize;
/// assert_eq!(tokenize("Yes—definitely!"), ["yes", "definitely"]);
/// assert!(tokenize("").is_empty());
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// One example's scores. Every field lies in [0, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub bleu: f64,
    pub rouge1_f: f64,
    pub rouge2_f: f64,
    #[serde(rename = "rougeL_f")]
    pub rouge_l_f: f64,
    pub semantic_f1: f64,
    pub quality: f64,
    pub length_sim: f64,
    pub sentence_count_sim: f64,
    pub sentiment_sim: f64,
    pub distinct1: f64,
    pub distinct2: f64,
}

impl MetricVector {
    /// Serialized field names in declaration order.
    pub const FIELDS: [&'static str; 11] = [
        "bleu",
        "rouge1_f",
        "rouge2_f",
        "rougeL_f",
        "semantic_f1",
        "quality",
        "length_sim",
        "sentence_count_sim",
        "sentiment_sim",
        "distinct1",
        "distinct2",
    ];

    pub fn values(&self) -> [f64; 11] {
        [
            self.bleu,
            self.rouge1_f,
            self.rouge2_f,
            self.rouge_l_f,
            self.semantic_f1,
            self.quality,
            self.length_sim,
            self.sentence_count_sim,
            self.sentiment_sim,
            self.distinct1,
            self.distinct2,
        ]
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        Self::FIELDS.iter().position(|f| *f == field).map(|i| self.values()[i])
    }
}

/// Shared evaluation settings.
#[derive(Clone)]
pub struct EvalContext {
    pub provider: Arc<dyn EmbeddingProvider>,
    pub idf: Option<IdfWeights>,
    pub lexicon: SentimentLexicon,
    pub quality: QualityConfig,
    pub bleu_max_n: usize,
}

impl Default for EvalContext {
    fn default() -> Self {
        Self {
            provider: Arc::new(HashedTrigramProvider::default()),
            idf: None,
            lexicon: SentimentLexicon::bundled(),
            quality: QualityConfig::default(),
            bleu_max_n: 4,
        }
    }
}

impl std::fmt::Debug for EvalContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvalContext")
            .field("provider", &self.provider.name())
            .field("idf", &self.idf.is_some())
            .field("lexicon_entries", &self.lexicon.len())
            .field("quality", &self.quality)
            .field("bleu_max_n", &self.bleu_max_n)
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricVector,
    /// Names of metrics that hit a degenerate input, e.g. `bleu_degenerate`.
    pub flags: Vec<String>,
}

/// Recovers the question a record asks from its metadata and user message.
/// Likert anchors come from the `Scale:` line of the user message.
pub fn question_from_record(record: &ChatRecord) -> SurveyQuestion {
    let user = record.user_content();
    let text = user
        .lines()
        .find_map(|l| l.strip_prefix("Question (").and_then(|rest| rest.split_once("): ")).map(|(_, t)| t))
        .unwrap_or_default()
        .to_string();
    let scale = user
        .lines()
        .find_map(|l| l.strip_prefix("Scale: "))
        .map(|s| s.split(" | ").map(String::from).collect());
    SurveyQuestion {
        id: record.meta.question_id.clone(),
        domain: record.meta.domain,
        qtype: record.meta.question_type,
        text,
        scale,
        source: None,
    }
}

/// Scores `generated` against `reference` for one record.
pub fn evaluate_pair(
    record: &ChatRecord,
    generated: &str,
    reference: &str,
    ctx: &EvalContext,
) -> Result<Evaluation, ProviderError> {
    evaluate_question(&question_from_record(record), generated, reference, ctx)
}

/// [`evaluate_pair`] with the question given directly.
pub fn evaluate_question(
    question: &SurveyQuestion,
    generated: &str,
    reference: &str,
    ctx: &EvalContext,
) -> Result<Evaluation, ProviderError> {
    let cand = tokenize(generated);
    let refs = tokenize(reference);
    let mut flags = Vec::new();
    if generated.trim().is_empty() {
        flags.push("empty_generation".to_string());
    }

    let b = overlap::bleu_tokens(&cand, &refs, ctx.bleu_max_n);
    if b.degenerate {
        flags.push("bleu_degenerate".into());
    }
    let r1 = overlap::rouge_n_tokens(&cand, &refs, 1);
    let r2 = overlap::rouge_n_tokens(&cand, &refs, 2);
    let rl = overlap::rouge_l_tokens(&cand, &refs);
    if r1.degenerate {
        flags.push("rouge_degenerate".into());
    }
    let sem = semantic_f1(&cand, &refs, ctx.provider.as_ref(), ctx.idf.as_ref())?;
    if sem.degenerate {
        flags.push("semantic_degenerate".into());
    }
    let d1 = overlap::distinct_n_tokens(std::slice::from_ref(&cand), 1);
    let d2 = overlap::distinct_n_tokens(std::slice::from_ref(&cand), 2);
    if d1.degenerate {
        flags.push("distinct1_degenerate".into());
    }
    if d2.degenerate {
        flags.push("distinct2_degenerate".into());
    }
    let quality = survey_quality(generated, question, &ctx.quality);

    let metrics = MetricVector {
        bleu: b.score,
        rouge1_f: r1.f1,
        rouge2_f: r2.f1,
        rouge_l_f: rl.f1,
        semantic_f1: sem.f1,
        quality: quality.score,
        length_sim: length_similarity(generated, reference),
        sentence_count_sim: sentence_count_similarity(generated, reference),
        sentiment_sim: sentiment_similarity(generated, reference, &ctx.lexicon),
        distinct1: d1.value,
        distinct2: d2.value,
    };
    Ok(Evaluation { metrics, flags })
}

/// One line of the evaluation output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalLine {
    pub record_id: String,
    pub model: String,
    pub domain: Domain,
    pub question_type: QuestionType,
    pub metrics: MetricVector,
    #[serde(default)]
    pub flags: Vec<String>,
}

/// A record with its generated and reference texts.
#[derive(Clone, Copy, Debug)]
pub struct EvalItem<'a> {
    pub record: &'a ChatRecord,
    pub model: &'a str,
    pub generated: &'a str,
    pub reference: &'a str,
}

/// Evaluates items in parallel; output order follows input order.
pub fn evaluate_batch(items: &[EvalItem<'_>], ctx: &EvalContext) -> Result<Vec<EvalLine>, ProviderError> {
    items
        .par_iter()
        .map(|item| {
            let ev = evaluate_pair(item.record, item.generated, item.reference, ctx)?;
            Ok(EvalLine {
                record_id: item.record.id.clone(),
                model: item.model.to_string(),
                domain: item.record.meta.domain,
                question_type: item.record.meta.question_type,
                metrics: ev.metrics,
                flags: ev.flags,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("The cat sat."), ["the", "cat", "sat"]);
        assert_eq!(tokenize("  \t\n"), Vec::<String>::new());
        assert_eq!(tokenize("I'd rate it 4/5"), ["i", "d", "rate", "it", "4", "5"]);
        assert_eq!(tokenize("ÉCOLE publique"), ["école", "publique"]);
    }

    #[test]
    fn identity_gives_ones() {
        let q = SurveyQuestion {
            id: "q".into(),
            domain: Domain::Education,
            qtype: QuestionType::Open,
            text: "How do you learn?".into(),
            scale: None,
            source: None,
        };
        let text = "I learn best by doing small projects. Reading alone rarely sticks for me.";
        let ev = evaluate_question(&q, text, text, &EvalContext::default()).unwrap();
        let m = ev.metrics;
        for v in [m.bleu, m.rouge1_f, m.rouge2_f, m.rouge_l_f, m.semantic_f1, m.length_sim, m.sentence_count_sim, m.sentiment_sim] {
            assert_eq!(v, 1.0, "{m:?}");
        }
        assert!(ev.flags.is_empty());
    }

    #[test]
    fn empty_generation_scores_zero() {
        let q = SurveyQuestion {
            id: "q".into(),
            domain: Domain::Education,
            qtype: QuestionType::YesNo,
            text: "?".into(),
            scale: None,
            source: None,
        };
        let ev = evaluate_question(&q, "", "Yes, I do.", &EvalContext::default()).unwrap();
        assert_eq!((ev.metrics.bleu, ev.metrics.rouge1_f, ev.metrics.length_sim), (0.0, 0.0, 0.0));
        assert!(ev.flags.contains(&"empty_generation".to_string()));
        assert!(ev.flags.contains(&"bleu_degenerate".to_string()));
    }

    #[test]
    fn field_lookup() {
        let m = MetricVector { rouge_l_f: 0.25, ..Default::default() };
        assert_eq!(m.get("rougeL_f"), Some(0.25));
        assert_eq!(m.get("nope"), None);
        let json = serde_json::to_value(m).unwrap();
        let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), MetricVector::FIELDS.len());
        for f in MetricVector::FIELDS {
            assert!(json.get(f).is_some(), "{f}");
        }
    }
}
