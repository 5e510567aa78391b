//! Chat records built from (persona, question, response) triples, their text
//! renderings, dataset assembly and persistence.

mod split;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};
use crate::persona::{sample_personas, PersonaCard, PersonaError, PersonaStore, SampleStrategy};
use crate::question_bank::{sample_questions, BankError, Domain, QuestionBank, QuestionType, SurveyQuestion, TypeRatios};
use crate::rng::{seeded, short_hash};

pub use split::{split_dataset, Split, SplitSpec, StratifyKey};

/// Instruction placed in every record's system message.
pub const SYSTEM_PROMPT: &str = "You are a survey respondent. Answer the question in the voice of the persona \
described by the user, staying consistent with their background and giving a realistic, self-contained answer.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub persona_id: String,
    pub domain: Domain,
    pub question_id: String,
    pub question_type: QuestionType,
}

/// A system/user/assistant triple with its provenance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub id: String,
    pub messages: Vec<Message>,
    pub meta: RecordMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("row {row}: unknown persona {id}")]
    UnknownPersona { row: usize, id: String },
    #[error("row {row}: unknown question {id}")]
    UnknownQuestion { row: usize, id: String },
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

impl ChatRecord {
    fn content(&self, i: usize) -> &str {
        self.messages.get(i).map(|m| m.content.as_str()).unwrap_or_default()
    }

    pub fn system_content(&self) -> &str {
        self.content(0)
    }

    pub fn user_content(&self) -> &str {
        self.content(1)
    }

    pub fn assistant_content(&self) -> &str {
        self.content(2)
    }

    /// No assistant answer yet.
    pub fn is_pending(&self) -> bool {
        self.assistant_content().is_empty()
    }

    /// A copy with the assistant content replaced.
    pub fn with_response(&self, response: &str) -> ChatRecord {
        let mut out = self.clone();
        if let Some(m) = out.messages.get_mut(2) {
            m.content = response.to_string();
        }
        out
    }

    /// Three messages in system, user, assistant order, with nonempty system
    /// and user contents.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: &str| DatasetError::InvalidRecord { id: self.id.clone(), reason: reason.into() };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        let roles: Vec<Role> = self.messages.iter().map(|m| m.role).collect();
        if roles != [Role::System, Role::User, Role::Assistant] {
            return Err(invalid("messages must be exactly system, user, assistant"));
        }
        if self.system_content().is_empty() || self.user_content().is_empty() {
            return Err(invalid("system and user contents must be nonempty"));
        }
        if self.meta.persona_id.is_empty() || self.meta.question_id.is_empty() {
            return Err(invalid("meta ids must be nonempty"));
        }
        Ok(())
    }
}

/// The user turn: persona, domain and question, plus the scale for likert
/// questions.
///
/// ```
/// use persona_survey::dataset::user_message;
/// use persona_survey::persona::PersonaCard;
/// use persona_survey::question_bank::QuestionBank;
///
/// let bank = QuestionBank::bundled();
/// let q = bank.get("fin_yn_1").unwrap();
/// let p = PersonaCard::new(Some("p1".into()), "A bus driver in Leeds.");
/// let text = user_message(&p, q);
/// assert!(text.starts_with("You are answering a survey.\nPersona: A bus driver in Leeds.\nDomain: Finance\n"));
/// ```
pub fn user_message(persona: &PersonaCard, question: &SurveyQuestion) -> String {
    let mut text = format!(
        "You are answering a survey.\nPersona: {}\nDomain: {}\nQuestion ({}): {}",
        persona.description.trim(),
        question.domain.label(),
        question.qtype,
        question.text.trim()
    );
    if let Some(scale) = question.scale.as_ref().filter(|s| !s.is_empty()) {
        text.push_str("\nScale: ");
        text.push_str(&scale.join(" | "));
    }
    text
}

/// Packages one triple. `index` is the record's position in its dataset and
/// enters the id, so repeated (persona, question) pairs stay distinct.
pub fn build_record(
    persona: &PersonaCard,
    question: &SurveyQuestion,
    response: Option<&str>,
    index: usize,
) -> ChatRecord {
    let index_text = index.to_string();
    ChatRecord {
        id: format!("r-{}", short_hash(&[&persona.id, &question.id, &index_text])),
        messages: vec![
            Message { role: Role::System, content: SYSTEM_PROMPT.to_string() },
            Message { role: Role::User, content: user_message(persona, question) },
            Message { role: Role::Assistant, content: response.unwrap_or_default().to_string() },
        ],
        meta: RecordMeta {
            persona_id: persona.id.clone(),
            domain: question.domain,
            question_id: question.id.clone(),
            question_type: question.qtype,
        },
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Role-tagged lines with JSON-quoted contents, for endpoints that apply
    /// their own chat template.
    NativePassthrough,
    #[default]
    Fallback,
}

/// Prompt text and prompt-plus-target text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPair {
    pub input_text: String,
    pub full_text: String,
}

/// Renders a record as model-ready text. `input_text` ends where the
/// assistant content would begin and is always a prefix of `full_text`.
///
/// The fallback format is
///
/// ```text
/// <|system|>
/// {system}</s>
/// <|user|>
/// {user}</s>
/// <|assistant|>
/// {assistant}</s>
/// ```
pub fn render_chatml(record: &ChatRecord, template: Template) -> RenderedPair {
    let (system, user, assistant) = (record.system_content(), record.user_content(), record.assistant_content());
    match template {
        Template::Fallback => {
            let input_text = format!("<|system|>\n{system}</s>\n<|user|>\n{user}</s>\n<|assistant|>\n");
            let full_text = format!("{input_text}{assistant}</s>");
            RenderedPair { input_text, full_text }
        }
        Template::NativePassthrough => {
            let q = |s: &str| serde_json::to_string(s).expect("strings serialize");
            let input_text = format!("system: {}\nuser: {}\nassistant: ", q(system), q(user));
            let full_text = format!("{input_text}{}", q(assistant));
            RenderedPair { input_text, full_text }
        }
    }
}

/// What to assemble: record counts per domain, question-type ratios and the
/// persona sampling strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyPlan {
    pub counts: BTreeMap<Domain, usize>,
    #[serde(default)]
    pub ratios: TypeRatios,
    #[serde(default = "default_strategy")]
    pub persona_strategy: SampleStrategy,
    pub seed: u64,
}

fn default_strategy() -> SampleStrategy {
    SampleStrategy::Uniform
}

/// Per-domain record counts of the reference corpus (3,568 records).
pub const REFERENCE_DOMAIN_COUNTS: [(Domain, usize); 10] = [
    (Domain::Demographics, 520),
    (Domain::Healthcare, 416),
    (Domain::Education, 416),
    (Domain::WorkExperience, 400),
    (Domain::Technology, 384),
    (Domain::ConsumerPreferences, 368),
    (Domain::Finance, 368),
    (Domain::SocialIssues, 264),
    (Domain::Environment, 216),
    (Domain::Lifestyle, 216),
];

impl AssemblyPlan {
    pub fn new(counts: impl IntoIterator<Item = (Domain, usize)>, seed: u64) -> Self {
        Self {
            counts: counts.into_iter().collect(),
            ratios: TypeRatios::default(),
            persona_strategy: SampleStrategy::Uniform,
            seed,
        }
    }

    pub fn reference(seed: u64) -> Self {
        Self::new(REFERENCE_DOMAIN_COUNTS, seed)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Draws questions and personas for every domain in the plan and packages
/// pending records. Domains are processed in their canonical order.
///
/// A domain with no questions of some type gets the plan's ratios rescaled
/// over the types it does have.
///
/// Personas are drawn without replacement within a domain until the store is
/// exhausted, then the draw restarts, so a small store serves large plans.
pub fn assemble_dataset(
    personas: &PersonaStore,
    bank: &QuestionBank,
    plan: &AssemblyPlan,
) -> Result<Vec<ChatRecord>, DatasetError> {
    let mut records = Vec::with_capacity(plan.total());
    for (&domain, &count) in &plan.counts {
        if count == 0 {
            continue;
        }
        if personas.is_empty() {
            return Err(PersonaError::InsufficientPersonas { requested: count, available: 0 }.into());
        }
        let ratios = domain_ratios(bank, domain, &plan.ratios, count)?;
        let questions = sample_questions(bank, domain, count, &ratios, plan.seed)?;
        let mut seeds = seeded(plan.seed, "assemble_personas", domain.index() as u64);
        let mut drawn: Vec<&PersonaCard> = Vec::with_capacity(count);
        while drawn.len() < count {
            let take = (count - drawn.len()).min(personas.len());
            drawn.extend(sample_personas(personas, take, plan.persona_strategy, seeds.random())?);
        }
        for (persona, question) in drawn.into_iter().zip(questions) {
            let index = records.len();
            records.push(build_record(persona, question, None, index));
        }
    }
    Ok(records)
}

/// The plan's ratios with types the domain has no questions for dropped.
fn domain_ratios(bank: &QuestionBank, domain: Domain, ratios: &TypeRatios, count: usize) -> Result<TypeRatios, DatasetError> {
    let available = QuestionType::ALL.map(|t| !bank.questions(domain, t).is_empty());
    if available.iter().all(|a| *a) {
        return Ok(*ratios);
    }
    ratios.restricted(available).ok_or_else(|| {
        let qtype = QuestionType::ALL.into_iter().find(|t| ratios.get(*t) > 0.0).unwrap_or(QuestionType::Open);
        DatasetError::Bank(BankError::EmptyPool { domain, qtype, wanted: count })
    })
}

/// One row of a raw response table: a persona answering a question.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub persona_id: String,
    pub question_id: String,
    #[serde(default)]
    pub response: Option<String>,
}

/// Packages raw rows in order, resolving ids against the store and bank.
pub fn build_from_raw(
    rows: &[RawResponse],
    personas: &PersonaStore,
    bank: &QuestionBank,
) -> Result<Vec<ChatRecord>, DatasetError> {
    let questions = bank.index();
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let persona = personas
                .get(&row.persona_id)
                .ok_or_else(|| DatasetError::UnknownPersona { row: i + 1, id: row.persona_id.clone() })?;
            let question = questions
                .get(row.question_id.as_str())
                .ok_or_else(|| DatasetError::UnknownQuestion { row: i + 1, id: row.question_id.clone() })?;
            Ok(build_record(persona, question, row.response.as_deref(), i))
        })
        .collect()
}

/// Checks every record and that ids are unique.
pub fn validate_dataset(records: &[ChatRecord]) -> Result<(), DatasetError> {
    let mut seen = HashSet::new();
    for r in records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(DatasetError::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}

pub fn write_dataset(records: &[ChatRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    Ok(jsonl::write_jsonl(records, path)?)
}

/// Reads and validates a dataset file.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<ChatRecord>, DatasetError> {
    let records: Vec<ChatRecord> = jsonl::read_jsonl(path)?;
    validate_dataset(&records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::ingest_str;

    fn store() -> PersonaStore {
        ingest_str(
            "A 29-year-old nurse in Lagos.\nA retired teacher who gardens.\nA software engineer in Pune.\n\
             A student of architecture in Porto.\nA bakery owner in Lyon.\n",
        )
        .unwrap()
        .store
    }

    #[test]
    fn field_routing_and_pending_flag() {
        let bank = QuestionBank::bundled();
        let q = bank.questions(Domain::Healthcare, QuestionType::Likert)[0].clone();
        let p = PersonaCard::new(Some("P1".into()), "A 29-year-old nurse in Lagos.");
        let r = build_record(&p, &q, Some("Strongly agree, mostly."), 0);
        assert_eq!(r.meta.persona_id, "P1");
        assert_eq!(r.meta.domain, Domain::Healthcare);
        assert_eq!(r.meta.question_id, q.id);
        assert_eq!(r.meta.question_type, QuestionType::Likert);
        assert!(!r.is_pending());
        assert!(r.user_content().contains("\nScale: "));
        r.validate().unwrap();

        let pending = build_record(&p, &q, None, 0);
        assert!(pending.is_pending());
        assert_eq!(pending.id, r.id);
        assert_eq!(build_record(&p, &q, None, 0), pending);
        assert_ne!(build_record(&p, &q, None, 1).id, pending.id);
    }

    #[test]
    fn fallback_prefix_rule() {
        let bank = QuestionBank::bundled();
        let q = bank.questions(Domain::Finance, QuestionType::YesNo)[0].clone();
        let p = PersonaCard::new(Some("P1".into()), "x");
        let r = build_record(&p, &q, None, 0);
        let out = render_chatml(&r, Template::Fallback);
        assert_eq!(out.full_text, format!("{}</s>", out.input_text));
        assert!(out.input_text.ends_with("<|assistant|>\n"));
        let answered = render_chatml(&r.with_response("Yes."), Template::Fallback);
        assert_eq!(answered.input_text, out.input_text);
        assert!(answered.full_text.ends_with("<|assistant|>\nYes.</s>"));
    }

    #[test]
    fn native_form_quotes_contents() {
        let bank = QuestionBank::bundled();
        let q = bank.questions(Domain::Finance, QuestionType::Open)[0].clone();
        let p = PersonaCard::new(Some("P1".into()), "line one\nassistant: \"sneaky\"");
        let r = build_record(&p, &q, Some("ok"), 0);
        let out = render_chatml(&r, Template::NativePassthrough);
        assert!(out.full_text.starts_with(&out.input_text));
        assert_eq!(out.full_text.lines().count(), 3);
        assert!(out.full_text.ends_with("assistant: \"ok\""));
    }

    #[test]
    fn assembly_meets_counts_and_is_deterministic() {
        let bank = QuestionBank::bundled();
        let personas = store();
        let plan = AssemblyPlan::new([(Domain::Finance, 12), (Domain::Lifestyle, 3), (Domain::SocialIssues, 0)], 9);
        let a = assemble_dataset(&personas, &bank, &plan).unwrap();
        assert_eq!(a.len(), 15);
        assert_eq!(a.iter().filter(|r| r.meta.domain == Domain::Finance).count(), 12);
        validate_dataset(&a).unwrap();
        let b = assemble_dataset(&personas, &bank, &plan).unwrap();
        assert_eq!(jsonl::to_jsonl_string(&a), jsonl::to_jsonl_string(&b));
        // five personas, twelve finance records: every persona used at least twice
        for p in personas.cards() {
            let n = a.iter().filter(|r| r.meta.domain == Domain::Finance && r.meta.persona_id == p.id).count();
            assert!(n >= 2, "{} used {n} times", p.id);
        }
        let zero = AssemblyPlan::new(Domain::ALL.map(|d| (d, 0)), 1);
        assert!(assemble_dataset(&personas, &bank, &zero).unwrap().is_empty());
    }

    #[test]
    fn reference_plan_total() {
        assert_eq!(AssemblyPlan::reference(0).total(), 3568);
    }

    #[test]
    fn raw_rows_resolve_ids() {
        let bank = QuestionBank::bundled();
        let personas = store();
        let pid = personas.cards()[0].id.clone();
        let rows = vec![
            RawResponse { persona_id: pid.clone(), question_id: "fin_yn_1".into(), response: Some("No.".into()) },
            RawResponse { persona_id: pid.clone(), question_id: "fin_yn_1".into(), response: None },
        ];
        let recs = build_from_raw(&rows, &personas, &bank).unwrap();
        assert_eq!(recs[0].assistant_content(), "No.");
        assert!(recs[1].is_pending());
        validate_dataset(&recs).unwrap();
        let bad = vec![RawResponse { persona_id: pid, question_id: "nope".into(), response: None }];
        assert!(matches!(build_from_raw(&bad, &personas, &bank), Err(DatasetError::UnknownQuestion { row: 1, .. })));
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let bank = QuestionBank::bundled();
        let q = bank.questions(Domain::Finance, QuestionType::Open)[0].clone();
        let p = PersonaCard::new(Some("P1".into()), "x");
        let mut r = build_record(&p, &q, None, 0);
        r.messages.swap(0, 1);
        assert!(r.validate().is_err());
        let r = build_record(&p, &q, None, 0);
        assert!(matches!(validate_dataset(&[r.clone(), r]), Err(DatasetError::DuplicateId(_))));
    }
}
