//! Survey questions organized domain → question type, and type-balanced
//! sampling from them.
//!
//! A bank file is a JSON object keyed by domain. Every domain node holds the
//! four lists `likert`, `open`, `yesno` and `agreement`:
//!
//! ```json
//! {
//!   "provenance": "original items",
//!   "healthcare": {
//!     "likert": [{"id": "hc_l1", "text": "...", "scale": ["Poor", "Fair", "Good"]}],
//!     "open": [], "yesno": [], "agreement": []
//!   }
//! }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::apportion::stochastic_round;
use crate::rng::seeded;

/// The ten survey domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Demographics,
    Healthcare,
    Education,
    WorkExperience,
    Technology,
    ConsumerPreferences,
    Finance,
    SocialIssues,
    Environment,
    Lifestyle,
}

impl Domain {
    pub const ALL: [Domain; 10] = [
        Domain::Demographics,
        Domain::Healthcare,
        Domain::Education,
        Domain::WorkExperience,
        Domain::Technology,
        Domain::ConsumerPreferences,
        Domain::Finance,
        Domain::SocialIssues,
        Domain::Environment,
        Domain::Lifestyle,
    ];

    /// Identifier used in files, e.g. `work_experience`.
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Demographics => "demographics",
            Domain::Healthcare => "healthcare",
            Domain::Education => "education",
            Domain::WorkExperience => "work_experience",
            Domain::Technology => "technology",
            Domain::ConsumerPreferences => "consumer_preferences",
            Domain::Finance => "finance",
            Domain::SocialIssues => "social_issues",
            Domain::Environment => "environment",
            Domain::Lifestyle => "lifestyle",
        }
    }

    /// Human-readable label, e.g. `Work Experience`.
    pub fn label(self) -> &'static str {
        match self {
            Domain::Demographics => "Demographics",
            Domain::Healthcare => "Healthcare",
            Domain::Education => "Education",
            Domain::WorkExperience => "Work Experience",
            Domain::Technology => "Technology",
            Domain::ConsumerPreferences => "Consumer Preferences",
            Domain::Finance => "Finance",
            Domain::SocialIssues => "Social Issues",
            Domain::Environment => "Environment",
            Domain::Lifestyle => "Lifestyle",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown domain `{s}`"))
    }
}

/// The four survey item formats. Declaration order is the fixed tie-break
/// order used by apportionment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Open,
    Likert,
    #[serde(rename = "yesno")]
    YesNo,
    Agreement,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] =
        [QuestionType::Open, QuestionType::Likert, QuestionType::YesNo, QuestionType::Agreement];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Open => "open",
            QuestionType::Likert => "likert",
            QuestionType::YesNo => "yesno",
            QuestionType::Agreement => "agreement",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuestionType::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| format!("unknown question type `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurveyQuestion {
    pub id: String,
    pub domain: Domain,
    pub qtype: QuestionType,
    pub text: String,
    /// Ordered answer anchors; present exactly for Likert items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Target share of each question type.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeRatios {
    pub open: f64,
    pub likert: f64,
    pub yesno: f64,
    pub agreement: f64,
}

impl Default for TypeRatios {
    /// The question-type mix of the reference corpus: 42.7% open, 31.7%
    /// Likert, 18.3% yes/no, 7.3% agreement.
    fn default() -> Self {
        Self { open: 0.427, likert: 0.317, yesno: 0.183, agreement: 0.073 }
    }
}

impl TypeRatios {
    pub fn new(open: f64, likert: f64, yesno: f64, agreement: f64) -> Result<Self, BankError> {
        let ratios = Self { open, likert, yesno, agreement };
        ratios.validate()?;
        Ok(ratios)
    }

    pub fn validate(&self) -> Result<(), BankError> {
        let values = self.as_array();
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BankError::InvalidRatios(format!("negative or non-finite ratio in {values:?}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(BankError::InvalidRatios(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub fn get(&self, qtype: QuestionType) -> f64 {
        self.as_array()[qtype.index()]
    }

    /// Ratios in [`QuestionType::ALL`] order.
    pub fn as_array(&self) -> [f64; 4] {
        [self.open, self.likert, self.yesno, self.agreement]
    }

    /// Zeroes the types `available` rules out and rescales the rest to sum
    /// to one. `None` when no type with a positive ratio remains.
    pub fn restricted(&self, available: [bool; 4]) -> Option<TypeRatios> {
        let mut v = self.as_array();
        for (x, ok) in v.iter_mut().zip(available) {
            if !ok {
                *x = 0.0;
            }
        }
        let sum: f64 = v.iter().sum();
        if sum <= 0.0 {
            return None;
        }
        Some(TypeRatios { open: v[0] / sum, likert: v[1] / sum, yesno: v[2] / sum, agreement: v[3] / sum })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BankError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed bank file: {0}")]
    Parse(String),
    #[error("bank schema error: {0}")]
    Schema(String),
    #[error("duplicate question id `{0}`")]
    DuplicateId(String),
    #[error("no {qtype} questions in {domain} but {wanted} requested")]
    EmptyPool { domain: Domain, qtype: QuestionType, wanted: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid type ratios: {0}")]
    InvalidRatios(String),
}

/// One broken bank invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateId { id: String },
    EmptyId { domain: Domain, qtype: QuestionType },
    EmptyText { id: String },
    MissingScale { id: String },
    ShortScale { id: String, anchors: usize },
    UnexpectedScale { id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "{id}: id appears more than once"),
            Violation::EmptyId { domain, qtype } => write!(f, "{domain}/{qtype}: question with empty id"),
            Violation::EmptyText { id } => write!(f, "{id}.text: empty"),
            Violation::MissingScale { id } => write!(f, "{id}.scale: likert question without a scale"),
            Violation::ShortScale { id, anchors } => {
                write!(f, "{id}.scale: {anchors} anchor(s), at least 2 required")
            }
            Violation::UnexpectedScale { id } => write!(f, "{id}.scale: only likert questions carry a scale"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct DomainNode {
    lists: [Vec<SurveyQuestion>; 4],
}

/// Questions grouped by domain and type. Every domain has all four lists.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionBank {
    nodes: BTreeMap<Domain, DomainNode>,
    pub provenance: Option<String>,
}

impl Default for QuestionBank {
    fn default() -> Self {
        Self::new()
    }
}

/// The bundled bank file.
pub const DEFAULT_BANK: &str = include_str!("../data/default_bank.json");

impl QuestionBank {
    /// An empty bank with all ten domain nodes.
    pub fn new() -> Self {
        Self {
            nodes: Domain::ALL.into_iter().map(|d| (d, DomainNode::default())).collect(),
            provenance: None,
        }
    }

    /// The bundled 82-question bank.
    pub fn bundled() -> Self {
        Self::from_json_str(DEFAULT_BANK).expect("bundled bank is valid")
    }

    /// Files `question` under its own domain and type.
    pub fn insert(&mut self, question: SurveyQuestion) {
        let node = self.nodes.entry(question.domain).or_default();
        node.lists[question.qtype.index()].push(question);
    }

    pub fn questions(&self, domain: Domain, qtype: QuestionType) -> &[SurveyQuestion] {
        self.nodes.get(&domain).map(|n| n.lists[qtype.index()].as_slice()).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = &SurveyQuestion> {
        self.nodes.values().flat_map(|n| n.lists.iter().flatten())
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<&SurveyQuestion> {
        self.iter().find(|q| q.id == id)
    }

    /// Id → question lookup table.
    pub fn index(&self) -> HashMap<&str, &SurveyQuestion> {
        self.iter().map(|q| (q.id.as_str(), q)).collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self, BankError> {
        let root: Value = serde_json::from_str(text).map_err(|e| BankError::Parse(e.to_string()))?;
        let Value::Object(map) = root else {
            return Err(BankError::Schema("top level must be an object keyed by domain".into()));
        };
        let mut bank = QuestionBank::new();
        let mut seen_domains = Vec::new();
        for (key, node) in map {
            if key == "provenance" {
                match node {
                    Value::String(s) => bank.provenance = Some(s),
                    Value::Null => {}
                    _ => return Err(BankError::Schema("provenance must be a string".into())),
                }
                continue;
            }
            let domain: Domain = key.parse().map_err(BankError::Schema)?;
            seen_domains.push(domain);
            let Value::Object(lists) = node else {
                return Err(BankError::Schema(format!("{domain}: node must be an object")));
            };
            let mut seen_types = Vec::new();
            for (tkey, list) in lists {
                let qtype: QuestionType = tkey.parse().map_err(|e| BankError::Schema(format!("{domain}: {e}")))?;
                seen_types.push(qtype);
                let items: Vec<RawQuestion> = serde_json::from_value(list)
                    .map_err(|e| BankError::Schema(format!("{domain}/{qtype}: {e}")))?;
                for raw in items {
                    bank.insert(SurveyQuestion {
                        id: raw.id,
                        domain,
                        qtype,
                        text: raw.text,
                        scale: raw.scale,
                        source: raw.source,
                    });
                }
            }
            for qtype in QuestionType::ALL {
                if !seen_types.contains(&qtype) {
                    return Err(BankError::Schema(format!("{domain}: missing `{qtype}` list")));
                }
            }
        }
        for domain in Domain::ALL {
            if !seen_domains.contains(&domain) {
                return Err(BankError::Schema(format!("missing domain node `{domain}`")));
            }
        }
        let violations = validate_bank(&bank);
        if let Some(v) = violations.iter().find(|v| matches!(v, Violation::DuplicateId { .. })) {
            let Violation::DuplicateId { id } = v else { unreachable!() };
            return Err(BankError::DuplicateId(id.clone()));
        }
        if let Some(v) = violations.first() {
            return Err(BankError::Schema(v.to_string()));
        }
        Ok(bank)
    }

    /// Serializes to the bank file format.
    pub fn to_json_string(&self) -> String {
        let mut root = serde_json::Map::new();
        if let Some(p) = &self.provenance {
            root.insert("provenance".into(), Value::String(p.clone()));
        }
        for (domain, node) in &self.nodes {
            let mut lists = serde_json::Map::new();
            for qtype in [QuestionType::Likert, QuestionType::Open, QuestionType::YesNo, QuestionType::Agreement] {
                let items: Vec<RawQuestion> = node.lists[qtype.index()]
                    .iter()
                    .map(|q| RawQuestion {
                        id: q.id.clone(),
                        text: q.text.clone(),
                        scale: q.scale.clone(),
                        source: q.source.clone(),
                    })
                    .collect();
                lists.insert(qtype.as_str().into(), serde_json::to_value(items).expect("serializable"));
            }
            root.insert(domain.as_str().into(), Value::Object(lists));
        }
        serde_json::to_string_pretty(&Value::Object(root)).expect("serializable")
    }
}

#[derive(Serialize, Deserialize)]
struct RawQuestion {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

/// Reads and validates a bank file.
pub fn load_question_bank(path: impl AsRef<Path>) -> Result<QuestionBank, BankError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| BankError::Io { path: path.display().to_string(), source })?;
    QuestionBank::from_json_str(&text)
}

/// Lists every broken invariant; empty iff the bank is valid.
pub fn validate_bank(bank: &QuestionBank) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for q in bank.iter() {
        if q.id.trim().is_empty() {
            violations.push(Violation::EmptyId { domain: q.domain, qtype: q.qtype });
        } else {
            let n = seen.entry(q.id.as_str()).or_default();
            *n += 1;
            if *n == 2 {
                violations.push(Violation::DuplicateId { id: q.id.clone() });
            }
        }
        if q.text.trim().is_empty() {
            violations.push(Violation::EmptyText { id: q.id.clone() });
        }
        match (&q.scale, q.qtype) {
            (None, QuestionType::Likert) => violations.push(Violation::MissingScale { id: q.id.clone() }),
            (Some(s), QuestionType::Likert) if s.len() < 2 => {
                violations.push(Violation::ShortScale { id: q.id.clone(), anchors: s.len() })
            }
            (Some(_), qtype) if qtype != QuestionType::Likert => {
                violations.push(Violation::UnexpectedScale { id: q.id.clone() })
            }
            _ => {}
        }
    }
    violations
}

/// Draws `count` questions from one domain with type shares following
/// `ratios`.
///
/// Type allocation rounds `count * ratio` by seeded unbiased rounding, so
/// large counts land within one question of the target per type and many
/// single-question draws reproduce the ratios in frequency. Within a type,
/// questions are drawn without replacement until the pool is exhausted and
/// with replacement after that. The result is shuffled so types interleave.
pub fn sample_questions<'a>(
    bank: &'a QuestionBank,
    domain: Domain,
    count: usize,
    ratios: &TypeRatios,
    seed: u64,
) -> Result<Vec<&'a SurveyQuestion>, BankError> {
    ratios.validate()?;
    let mut rng = seeded(seed, "sample_questions", domain.index() as u64);
    let alloc = stochastic_round(count, &ratios.as_array(), &mut rng);
    let mut picked = Vec::with_capacity(count);
    for (qtype, wanted) in QuestionType::ALL.into_iter().zip(alloc) {
        if wanted == 0 {
            continue;
        }
        let pool = bank.questions(domain, qtype);
        if pool.is_empty() {
            return Err(BankError::EmptyPool { domain, qtype, wanted });
        }
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        for k in 0..wanted {
            let i = if k < order.len() { order[k] } else { rng.random_range(0..pool.len()) };
            picked.push(&pool[i]);
        }
    }
    picked.shuffle(&mut rng);
    Ok(picked)
}

/// Empirical type shares of a question list.
pub fn type_distribution<'a, I>(questions: I) -> Result<TypeRatios, BankError>
where
    I: IntoIterator<Item = &'a SurveyQuestion>,
{
    let mut counts = [0usize; 4];
    for q in questions {
        counts[q.qtype.index()] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(BankError::EmptyInput);
    }
    let share = |i: usize| counts[i] as f64 / total as f64;
    Ok(TypeRatios { open: share(0), likert: share(1), yesno: share(2), agreement: share(3) })
}
