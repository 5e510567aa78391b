//! Survey-structure metrics: length and sentence-count similarity, lexicon
//! sentiment, and the composite survey quality score.
//!
//! These are stand-in definitions chosen to fit the column names and [0, 1]
//! ranges of the reported tables:
//!
//! * length similarity: `min(|c|, |r|) / max(|c|, |r|)` over characters,
//! * sentence-count similarity: the same ratio over sentence counts,
//! * sentiment similarity: `1 - |s_c - s_r| / 2` with
//!   `s = (P - N) / max(1, P + N)` over lexicon hits.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::overlap::distinct_n_tokens;
use super::tokenize;
use crate::question_bank::{QuestionType, SurveyQuestion};

fn ratio_similarity(a: usize, b: usize) -> f64 {
    match (a, b) {
        (0, 0) => 1.0,
        _ => a.min(b) as f64 / a.max(b) as f64,
    }
}

/// Character-count ratio; two empty texts are identical.
pub fn length_similarity(candidate: &str, reference: &str) -> f64 {
    ratio_similarity(candidate.chars().count(), reference.chars().count())
}

/// Words whose trailing period does not end a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "no", "approx", "dept", "inc",
    "ltd", "co", "mt", "u.s",
];

/// Splits on `.`, `!` and `?`, skipping periods after abbreviations or
/// between digits. Segments without letters or digits are not sentences.
pub fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut has_content = false;
    let mut word = String::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_alphanumeric() {
            has_content = true;
            word.extend(ch.to_lowercase());
        } else if matches!(ch, '.' | '!' | '?') {
            let is_period = ch == '.';
            let next = chars.get(i + 1).copied();
            let prev = if i > 0 { Some(chars[i - 1]) } else { None };
            let decimal = is_period
                && prev.is_some_and(|c| c.is_ascii_digit())
                && next.is_some_and(|c| c.is_ascii_digit());
            // "e.g." keeps its inner periods inside the word
            let inner_abbrev = is_period && next.is_some_and(|c| c.is_alphabetic()) && word.len() == 1;
            let abbrev = is_period && ABBREVIATIONS.contains(&word.as_str());
            if decimal || inner_abbrev {
                word.push('.');
            } else if abbrev {
                word.clear();
            } else {
                // swallow runs like "?!" or "..."
                while i + 1 < chars.len() && matches!(chars[i + 1], '.' | '!' | '?') {
                    i += 1;
                }
                if has_content {
                    count += 1;
                }
                has_content = false;
                word.clear();
            }
        } else {
            word.clear();
        }
        i += 1;
    }
    if has_content {
        count += 1;
    }
    count
}

pub fn sentence_count_similarity(candidate: &str, reference: &str) -> f64 {
    ratio_similarity(count_sentences(candidate), count_sentences(reference))
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("lexicon line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Token → polarity (+1 or -1).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SentimentLexicon {
    polarity: HashMap<String, i8>,
}

const BUNDLED_LEXICON: &str = include_str!("../../data/sentiment_lexicon.tsv");

impl SentimentLexicon {
    /// The bundled general-purpose opinion lexicon.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| LexiconError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Parses `token<TAB>+1|-1` lines. Blank lines and `#` comments are
    /// skipped; tokens must be lowercase and unique.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut polarity = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| LexiconError::Format { line: line_no, message };
            let (token, value) = line.split_once('\t').ok_or_else(|| err("expected token<TAB>polarity".into()))?;
            let sign = match value.trim() {
                "+1" => 1,
                "-1" => -1,
                other => return Err(err(format!("polarity must be +1 or -1, got `{other}`"))),
            };
            if token.is_empty() || token != token.to_lowercase() {
                return Err(err(format!("token `{token}` must be nonempty lowercase")));
            }
            if polarity.insert(token.to_string(), sign).is_some() {
                return Err(err(format!("duplicate token `{token}`")));
            }
        }
        Ok(Self { polarity })
    }

    pub fn polarity(&self, token: &str) -> Option<i8> {
        self.polarity.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.polarity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polarity.is_empty()
    }
}

/// `(P - N) / max(1, P + N)` over positive and negative lexicon hits.
pub fn sentiment_score(text: &str, lexicon: &SentimentLexicon) -> f64 {
    let (mut pos, mut neg) = (0usize, 0usize);
    for token in tokenize(text) {
        match lexicon.polarity(&token) {
            Some(1) => pos += 1,
            Some(_) => neg += 1,
            None => {}
        }
    }
    (pos as f64 - neg as f64) / (pos + neg).max(1) as f64
}

pub fn sentiment_similarity(candidate: &str, reference: &str, lexicon: &SentimentLexicon) -> f64 {
    let diff = sentiment_score(candidate, lexicon) - sentiment_score(reference, lexicon);
    (1.0 - diff.abs() / 2.0).clamp(0.0, 1.0)
}

/// Relative weights of the three quality sub-scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    pub format: f64,
    pub length: f64,
    pub diversity: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        Self { format: 1.0, length: 1.0, diversity: 1.0 }
    }
}

/// Plausible response length in characters, inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthBand {
    pub min: usize,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub weights: QualityWeights,
    pub open: LengthBand,
    pub likert: LengthBand,
    pub yesno: LengthBand,
    pub agreement: LengthBand,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            weights: QualityWeights::default(),
            open: LengthBand { min: 120, max: 900 },
            likert: LengthBand { min: 25, max: 500 },
            yesno: LengthBand { min: 15, max: 400 },
            agreement: LengthBand { min: 25, max: 500 },
        }
    }
}

impl QualityConfig {
    pub fn band(&self, qtype: QuestionType) -> LengthBand {
        match qtype {
            QuestionType::Open => self.open,
            QuestionType::Likert => self.likert,
            QuestionType::YesNo => self.yesno,
            QuestionType::Agreement => self.agreement,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityBreakdown {
    pub format: f64,
    pub length: f64,
    pub diversity: f64,
    pub score: f64,
}

/// Leading words that answer a yes/no question.
pub const YES_NO_WORDS: &[&str] = &[
    "yes", "yeah", "yep", "yup", "sure", "absolutely", "definitely", "certainly", "indeed", "no", "nope", "nah",
    "never", "not",
];

fn format_compliance(tokens: &[String], response: &str, question: &SurveyQuestion) -> f64 {
    match question.qtype {
        QuestionType::YesNo => {
            if tokens.first().is_some_and(|t| YES_NO_WORDS.contains(&t.as_str())) {
                1.0
            } else if tokens.iter().any(|t| YES_NO_WORDS.contains(&t.as_str())) {
                0.5
            } else {
                0.0
            }
        }
        QuestionType::Likert => {
            let anchors = question.scale.as_deref().unwrap_or_default();
            let hit = anchors.iter().any(|anchor| {
                let anchor = tokenize(anchor);
                !anchor.is_empty() && tokens.windows(anchor.len()).any(|w| w == anchor.as_slice())
            });
            if hit {
                1.0
            } else {
                0.0
            }
        }
        QuestionType::Agreement => {
            if tokens.iter().any(|t| t.starts_with("agree") || t.starts_with("disagree")) {
                1.0
            } else {
                0.0
            }
        }
        QuestionType::Open => {
            if count_sentences(response) >= 2 && tokens.len() >= 15 {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn length_plausibility(chars: usize, band: LengthBand) -> f64 {
    if chars >= band.min && chars <= band.max {
        1.0
    } else if chars < band.min {
        ratio_similarity(chars, band.min)
    } else {
        ratio_similarity(chars, band.max)
    }
}

/// Weighted mean of format compliance, length plausibility and
/// non-degeneracy (`min(1, distinct-2 / 0.5)`).
pub fn survey_quality(response: &str, question: &SurveyQuestion, config: &QualityConfig) -> QualityBreakdown {
    let tokens = tokenize(response);
    let format = format_compliance(&tokens, response, question);
    let length = length_plausibility(response.trim().chars().count(), config.band(question.qtype));
    let distinct2 = distinct_n_tokens(std::slice::from_ref(&tokens), 2);
    let diversity = (distinct2.value / 0.5).min(1.0);
    let w = config.weights;
    let total = w.format + w.length + w.diversity;
    let score = if total > 0.0 {
        (w.format * format + w.length * length + w.diversity * diversity) / total
    } else {
        0.0
    };
    QualityBreakdown { format, length, diversity, score: score.clamp(0.0, 1.0) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::question_bank::Domain;

    fn q(qtype: QuestionType) -> SurveyQuestion {
        SurveyQuestion {
            id: "q".into(),
            domain: Domain::Finance,
            qtype,
            text: "?".into(),
            scale: (qtype == QuestionType::Likert)
                .then(|| ["Never", "Rarely", "Sometimes", "Often", "Always"].map(String::from).to_vec()),
            source: None,
        }
    }

    #[test]
    fn length_examples() {
        assert_eq!(length_similarity(&"a".repeat(80), &"b".repeat(100)), 0.8);
        assert_eq!(length_similarity("abc", "xyz"), 1.0);
        assert_eq!(length_similarity("", "xyz"), 0.0);
        assert_eq!(length_similarity("", ""), 1.0);
    }

    #[test]
    fn sentence_counting() {
        assert_eq!(count_sentences("Dr. Smith agrees."), 1);
        assert_eq!(count_sentences("One. Two! Three?"), 3);
        assert_eq!(count_sentences("It costs 3.50 dollars. Fine"), 2);
        assert_eq!(count_sentences("Wait... what?!"), 2);
        assert_eq!(count_sentences("e.g. this one."), 1);
        assert_eq!(count_sentences(""), 0);
        assert_eq!(count_sentences("..."), 0);
        assert_eq!(sentence_count_similarity("A. B. C.", "A. B. C. D."), 0.75);
        assert_eq!(sentence_count_similarity("", "..."), 1.0);
    }

    #[test]
    fn sentiment_formula() {
        let lex = SentimentLexicon::parse("good\t+1\ngreat\t+1\nbad\t-1\n").unwrap();
        assert_eq!(sentiment_score("nothing here", &lex), 0.0);
        assert_eq!(sentiment_score("good and great", &lex), 1.0);
        assert_eq!(sentiment_score("good but bad", &lex), 0.0);
        assert_eq!(sentiment_similarity("good", "bad", &lex), 0.0);
        // s_c = (1 - 0) / 2 = 0.5 with "good okay" when only good is in the lexicon? use 3 pos 1 neg
        assert_eq!(sentiment_score("good great good bad", &lex), 0.5);
        assert_eq!(sentiment_similarity("good great good bad", "neutral words", &lex), 0.75);
        assert_eq!(sentiment_similarity("same text", "same text", &lex), 1.0);
    }

    #[test]
    fn lexicon_format_errors() {
        assert!(SentimentLexicon::parse("Good\t+1").is_err());
        assert!(SentimentLexicon::parse("good\t+2").is_err());
        assert!(SentimentLexicon::parse("good +1").is_err());
        assert!(SentimentLexicon::parse("good\t+1\ngood\t-1").is_err());
        let bundled = SentimentLexicon::bundled();
        assert!(bundled.len() >= 500, "{}", bundled.len());
        assert_eq!(bundled.polarity("excellent"), Some(1));
        assert_eq!(bundled.polarity("terrible"), Some(-1));
    }

    #[test]
    fn quality_of_empty_response() {
        let b = survey_quality("", &q(QuestionType::Open), &QualityConfig::default());
        assert_eq!((b.format, b.length, b.diversity, b.score), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn quality_saturates_for_good_yes_no_answer() {
        let answer = "Yes, because I keep a small savings buffer and check it every month.";
        let b = survey_quality(answer, &q(QuestionType::YesNo), &QualityConfig::default());
        assert_eq!(b.score, 1.0, "{b:?}");
        let late = survey_quality("I think so, yes.", &q(QuestionType::YesNo), &QualityConfig::default());
        assert_eq!(late.format, 0.5);
    }

    #[test]
    fn quality_of_repetitive_open_answer() {
        let response = "good good good good";
        let b = survey_quality(response, &q(QuestionType::Open), &QualityConfig::default());
        assert_eq!(b.format, 0.0);
        assert!((b.diversity - 2.0 / 3.0).abs() < 1e-12);
        // 19 characters against the 120-character lower edge of the open band
        assert!((b.length - 19.0 / 120.0).abs() < 1e-12);
        assert!((b.score - (0.0 + 19.0 / 120.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn likert_and_agreement_format() {
        let cfg = QualityConfig::default();
        assert_eq!(survey_quality("I do this often, most weeks.", &q(QuestionType::Likert), &cfg).format, 1.0);
        assert_eq!(survey_quality("Hard to say.", &q(QuestionType::Likert), &cfg).format, 0.0);
        assert_eq!(survey_quality("I strongly disagree.", &q(QuestionType::Agreement), &cfg).format, 1.0);
        assert_eq!(survey_quality("Maybe.", &q(QuestionType::Agreement), &cfg).format, 0.0);
    }
}
