//! Persona cards: ingestion, keyword categorization, sampling and reuse
//! analytics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::apportion::largest_remainder;
use crate::question_bank::Domain;
use crate::rng::{seeded, short_hash};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaCategory {
    HealthcareWorker,
    Educator,
    Student,
    TechnicalSpecialist,
    Professional,
    Creative,
    Retiree,
    Other,
}

impl PersonaCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            PersonaCategory::HealthcareWorker => "healthcare_worker",
            PersonaCategory::Educator => "educator",
            PersonaCategory::Student => "student",
            PersonaCategory::TechnicalSpecialist => "technical_specialist",
            PersonaCategory::Professional => "professional",
            PersonaCategory::Creative => "creative",
            PersonaCategory::Retiree => "retiree",
            PersonaCategory::Other => "other",
        }
    }
}

impl fmt::Display for PersonaCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Keyword rules, checked in order; the first rule with a matching word wins.
/// A word matches a keyword exactly or with a trailing `s`.
pub const CATEGORY_RULES: &[(PersonaCategory, &[&str])] = &[
    (
        PersonaCategory::HealthcareWorker,
        &[
            "nurse", "doctor", "physician", "surgeon", "paramedic", "pharmacist", "therapist", "dentist",
            "caregiver", "clinician", "midwife", "medic",
        ],
    ),
    (
        PersonaCategory::Educator,
        &["teacher", "professor", "educator", "lecturer", "tutor", "instructor", "principal", "teaching"],
    ),
    (
        PersonaCategory::Student,
        &["student", "undergraduate", "pupil", "freshman", "sophomore", "postgraduate", "schoolchild"],
    ),
    (
        PersonaCategory::TechnicalSpecialist,
        &[
            "engineer", "developer", "programmer", "scientist", "technician", "analyst", "researcher",
            "software", "mechanic", "electrician",
        ],
    ),
    (
        PersonaCategory::Professional,
        &[
            "manager", "lawyer", "attorney", "accountant", "consultant", "executive", "entrepreneur", "banker",
            "marketer", "professional", "administrator", "officer", "director",
        ],
    ),
    (
        PersonaCategory::Creative,
        &["artist", "writer", "musician", "designer", "photographer", "author", "painter", "journalist", "chef"],
    ),
    (PersonaCategory::Retiree, &["retired", "retiree", "pensioner", "retirement"]),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonaCard {
    pub id: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<PersonaCategory>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl PersonaCard {
    /// Builds a card, deriving the id from the description when absent.
    pub fn new(id: Option<String>, description: impl Into<String>) -> Self {
        let description = description.into();
        let id = id.unwrap_or_else(|| content_id(&description));
        let category = Some(categorize_text(&description));
        let attributes = extract_attributes(&description);
        Self { id, description, category, attributes }
    }

    /// The stored category, or the rule-based one.
    pub fn category(&self) -> PersonaCategory {
        self.category.unwrap_or_else(|| categorize(self))
    }
}

/// Content-hash id used for personas without one.
pub fn content_id(description: &str) -> String {
    format!("p-{}", short_hash(&[description.trim()]))
}

/// Rule-based category of a persona's description.
pub fn categorize(persona: &PersonaCard) -> PersonaCategory {
    categorize_text(&persona.description)
}

fn categorize_text(description: &str) -> PersonaCategory {
    let words: Vec<String> = crate::eval::tokenize(description);
    for (category, keywords) in CATEGORY_RULES {
        let hit = words.iter().any(|w| {
            keywords
                .iter()
                .any(|k| w == k || (w.len() == k.len() + 1 && w.starts_with(k) && w.ends_with('s')))
        });
        if hit {
            return *category;
        }
    }
    PersonaCategory::Other
}

fn extract_attributes(description: &str) -> BTreeMap<String, String> {
    let mut attributes = BTreeMap::new();
    let lower = description.to_lowercase();
    for marker in ["-year-old", " year old", " years old"] {
        if let Some(pos) = lower.find(marker) {
            let digits: String =
                lower[..pos].chars().rev().take_while(|c| c.is_ascii_digit()).collect::<Vec<_>>().into_iter().rev().collect();
            if !digits.is_empty() {
                attributes.insert("age".to_string(), digits);
                break;
            }
        }
    }
    attributes
}

#[derive(Debug, thiserror::Error)]
pub enum PersonaError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("persona file is empty")]
    EmptyFile,
    #[error("requested {requested} personas but the store holds {available}")]
    InsufficientPersonas { requested: usize, available: usize },
}

/// An input line that did not become a card.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

/// Immutable collection of persona cards with unique ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PersonaStore {
    cards: Vec<PersonaCard>,
    index: HashMap<String, usize>,
}

impl PersonaStore {
    /// Builds a store; later cards with an already-seen id are returned as
    /// rejects.
    pub fn from_cards(cards: impl IntoIterator<Item = PersonaCard>) -> (Self, Vec<PersonaCard>) {
        let mut store = PersonaStore::default();
        let mut rejected = Vec::new();
        for card in cards {
            if store.index.contains_key(&card.id) {
                rejected.push(card);
            } else {
                store.index.insert(card.id.clone(), store.cards.len());
                store.cards.push(card);
            }
        }
        (store, rejected)
    }

    pub fn cards(&self) -> &[PersonaCard] {
        &self.cards
    }

    pub fn get(&self, id: &str) -> Option<&PersonaCard> {
        self.index.get(id).map(|&i| &self.cards[i])
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    /// One JSON object per line, readable by [`ingest_str`].
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for card in &self.cards {
            out.push_str(&serde_json::to_string(card).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Cards per category, in category order.
    pub fn category_counts(&self) -> BTreeMap<PersonaCategory, usize> {
        let mut counts = BTreeMap::new();
        for card in &self.cards {
            *counts.entry(card.category()).or_default() += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub store: PersonaStore,
    pub skipped: Vec<SkippedLine>,
}

#[derive(Deserialize)]
struct PersonaLine {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    category: Option<PersonaCategory>,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
}

/// Reads a persona file: JSON objects or plain descriptions, one per line.
pub fn ingest_personas(path: impl AsRef<Path>) -> Result<Ingested, PersonaError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| PersonaError::Io { path: path.display().to_string(), source })?;
    ingest_str(&text)
}

pub fn ingest_str(text: &str) -> Result<Ingested, PersonaError> {
    if text.trim().is_empty() {
        return Err(PersonaError::EmptyFile);
    }
    let mut cards = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        let card = if trimmed.starts_with('{') {
            let parsed: PersonaLine = serde_json::from_str(trimmed)
                .map_err(|e| PersonaError::Parse { line, message: e.to_string() })?;
            let description = parsed.description.unwrap_or_default();
            if description.trim().is_empty() {
                skipped.push(SkippedLine { line, reason: "blank description".into() });
                continue;
            }
            let mut card = PersonaCard::new(parsed.id.filter(|id| !id.trim().is_empty()), description);
            if parsed.category.is_some() {
                card.category = parsed.category;
            }
            if !parsed.attributes.is_empty() {
                card.attributes = parsed.attributes;
            }
            card
        } else {
            if trimmed.is_empty() {
                skipped.push(SkippedLine { line, reason: "blank description".into() });
                continue;
            }
            PersonaCard::new(None, trimmed)
        };
        if let Some(first) = seen.get(&card.id) {
            skipped.push(SkippedLine { line, reason: format!("duplicate id {} (first on line {first})", card.id) });
            continue;
        }
        seen.insert(card.id.clone(), line);
        cards.push(card);
    }
    let (store, _) = PersonaStore::from_cards(cards);
    Ok(Ingested { store, skipped })
}

/// How many distinct domains each persona appears in.
#[derive(Clone, Debug, PartialEq)]
pub struct ReuseReport {
    pub domains_per_persona: BTreeMap<String, usize>,
    /// domain count → number of personas with that count
    pub histogram: BTreeMap<usize, usize>,
    pub fraction_single_domain: f64,
    pub fraction_multi_domain: f64,
    /// Set when there were no assignments; the fractions are then 0.
    pub undefined: bool,
}

pub fn reuse_stats<'a, I>(assignments: I) -> ReuseReport
where
    I: IntoIterator<Item = (&'a str, Domain)>,
{
    let mut domains: BTreeMap<String, BTreeSet<Domain>> = BTreeMap::new();
    for (persona, domain) in assignments {
        domains.entry(persona.to_string()).or_default().insert(domain);
    }
    let domains_per_persona: BTreeMap<String, usize> = domains.into_iter().map(|(p, d)| (p, d.len())).collect();
    let mut histogram = BTreeMap::new();
    for n in domains_per_persona.values() {
        *histogram.entry(*n).or_default() += 1;
    }
    let total = domains_per_persona.len();
    if total == 0 {
        return ReuseReport {
            domains_per_persona,
            histogram,
            fraction_single_domain: 0.0,
            fraction_multi_domain: 0.0,
            undefined: true,
        };
    }
    let single = histogram.get(&1).copied().unwrap_or(0);
    let fraction_single_domain = single as f64 / total as f64;
    ReuseReport {
        domains_per_persona,
        histogram,
        fraction_single_domain,
        fraction_multi_domain: (total - single) as f64 / total as f64,
        undefined: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStrategy {
    Uniform,
    CategoryBalanced,
}

/// Draws `n` distinct personas.
///
/// `CategoryBalanced` splits `n` across categories in proportion to their
/// sizes (largest remainder, category order breaks ties) before drawing
/// within each category.
pub fn sample_personas(
    store: &PersonaStore,
    n: usize,
    strategy: SampleStrategy,
    seed: u64,
) -> Result<Vec<&PersonaCard>, PersonaError> {
    if n > store.len() {
        return Err(PersonaError::InsufficientPersonas { requested: n, available: store.len() });
    }
    let mut rng = seeded(seed, "sample_personas", 0);
    let mut picked: Vec<&PersonaCard> = match strategy {
        SampleStrategy::Uniform => {
            let mut all: Vec<&PersonaCard> = store.cards.iter().collect();
            all.shuffle(&mut rng);
            all.truncate(n);
            all
        }
        SampleStrategy::CategoryBalanced => {
            let mut groups: BTreeMap<PersonaCategory, Vec<&PersonaCard>> = BTreeMap::new();
            for card in &store.cards {
                groups.entry(card.category()).or_default().push(card);
            }
            let sizes: Vec<f64> = groups.values().map(|g| g.len() as f64).collect();
            let alloc = largest_remainder(n, &sizes);
            let mut picked = Vec::with_capacity(n);
            for (group, take) in groups.into_values().zip(alloc) {
                let mut group = group;
                group.shuffle(&mut rng);
                picked.extend(group.into_iter().take(take));
            }
            picked
        }
    };
    picked.shuffle(&mut rng);
    Ok(picked)
}
