//! Aggregate tables over per-example metric vectors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::eval::{EvalLine, MetricVector};
use crate::question_bank::Domain;

/// Table columns: header and metric field, in display order.
pub const COLUMNS: [(&str, &str); 9] = [
    ("BLEU", "bleu"),
    ("R1", "rouge1_f"),
    ("R2", "rouge2_f"),
    ("RL", "rougeL_f"),
    ("BERT-F1", "semantic_f1"),
    ("Qual.", "quality"),
    ("Len.", "length_sim"),
    ("Sent.", "sentence_count_sim"),
    ("SentSim", "sentiment_sim"),
];

/// Rendered in place of a missing value.
pub const MISSING: &str = "—";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("no rows for domain {0}")]
    MissingDomain(Domain),
    #[error("unknown metric field `{0}`")]
    UnknownField(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub model: String,
    pub domain: Option<Domain>,
}

impl GroupKey {
    pub fn model(model: impl Into<String>) -> Self {
        Self { model: model.into(), domain: None }
    }

    pub fn model_domain(model: impl Into<String>, domain: Domain) -> Self {
        Self { model: model.into(), domain: Some(domain) }
    }
}

/// Keys evaluation lines by model, or by model and domain.
pub fn keyed(lines: &[EvalLine], by_domain: bool) -> Vec<(GroupKey, MetricVector, Domain)> {
    lines
        .iter()
        .map(|l| {
            let key = GroupKey { model: l.model.clone(), domain: by_domain.then_some(l.domain) };
            (key, l.metrics, l.domain)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    /// Mean over examples.
    #[default]
    Micro,
    /// Mean over domains of per-domain means.
    Macro,
}

/// Per-group means of every metric field, in [`MetricVector::FIELDS`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub key: GroupKey,
    pub count: usize,
    pub means: Vec<Option<f64>>,
}

impl AggregateRow {
    pub fn get(&self, field: &str) -> Option<f64> {
        let i = MetricVector::FIELDS.iter().position(|f| *f == field)?;
        self.means.get(i).copied().flatten()
    }
}

fn mean_vector<'a>(vectors: impl Iterator<Item = &'a [f64; 11]>) -> ([f64; 11], usize) {
    let mut sum = [0.0; 11];
    let mut n = 0usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        n += 1;
    }
    (sum.map(|s| s / n as f64), n)
}

/// Means per group, sorted by key. Items are `(key, vector, domain)`; the
/// domain is only consulted for macro averaging.
pub fn aggregate(items: &[(GroupKey, MetricVector, Domain)], average: Average) -> Result<Vec<AggregateRow>, ReportError> {
    if items.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut groups: BTreeMap<&GroupKey, BTreeMap<Option<Domain>, Vec<[f64; 11]>>> = BTreeMap::new();
    for (key, v, domain) in items {
        let sub = match average {
            Average::Micro => None,
            Average::Macro => Some(*domain),
        };
        groups.entry(key).or_default().entry(sub).or_default().push(v.values());
    }
    Ok(groups
        .into_iter()
        .map(|(key, subgroups)| {
            let count = subgroups.values().map(Vec::len).sum();
            let sub_means: Vec<[f64; 11]> = subgroups.values().map(|vs| mean_vector(vs.iter()).0).collect();
            let (means, _) = mean_vector(sub_means.iter());
            AggregateRow { key: key.clone(), count, means: means.iter().map(|m| Some(*m)).collect() }
        })
        .collect())
}

/// The best model for one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainWinner {
    pub domain: Domain,
    pub model: String,
    pub bleu: Option<f64>,
    pub rouge1_f: Option<f64>,
    pub quality: Option<f64>,
}

/// Picks, for each of `domains`, the model×domain row with the highest
/// `criterion`; equal scores go to the lexicographically smaller model name.
/// Rows without a domain or without the criterion value are ignored.
pub fn best_per_domain(rows: &[AggregateRow], criterion: &str, domains: &[Domain]) -> Result<Vec<DomainWinner>, ReportError> {
    if !MetricVector::FIELDS.contains(&criterion) {
        return Err(ReportError::UnknownField(criterion.to_string()));
    }
    domains
        .iter()
        .map(|&domain| {
            let best = rows
                .iter()
                .filter(|r| r.key.domain == Some(domain))
                .filter_map(|r| r.get(criterion).map(|score| (score, r)))
                .reduce(|a, b| {
                    if b.0 > a.0 || (b.0 == a.0 && b.1.key.model < a.1.key.model) {
                        b
                    } else {
                        a
                    }
                })
                .ok_or(ReportError::MissingDomain(domain))?
                .1;
            Ok(DomainWinner {
                domain,
                model: best.key.model.clone(),
                bleu: best.get("bleu"),
                rouge1_f: best.get("rouge1_f"),
                quality: best.get("quality"),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Markdown,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected markdown or csv)")),
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| format!("{x:.3}"))
}

fn render_table(header: Vec<String>, body: Vec<Vec<String>>, format: Format) -> String {
    match format {
        Format::Markdown => {
            let mut out = String::new();
            let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
            out.push_str(&line(&header));
            let rule: Vec<String> = header.iter().enumerate().map(|(i, _)| if i == 0 { "---".into() } else { "---:".into() }).collect();
            out.push_str(&line(&rule));
            for row in &body {
                out.push_str(&line(row));
            }
            out
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).expect("in-memory write");
            for row in &body {
                w.write_record(row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 is utf-8")
        }
    }
}

/// Renders aggregate rows with the nine metric columns at 3 decimals. A
/// domain column appears when any row is keyed by domain.
pub fn render(rows: &[AggregateRow], format: Format) -> String {
    let with_domain = rows.iter().any(|r| r.key.domain.is_some());
    let mut header = vec!["Model".to_string()];
    if with_domain {
        header.push("Domain".into());
    }
    header.push("N".into());
    header.extend(COLUMNS.iter().map(|(h, _)| h.to_string()));
    let body = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.key.model.clone()];
            if with_domain {
                cells.push(r.key.domain.map_or_else(|| MISSING.to_string(), |d| d.label().to_string()));
            }
            cells.push(r.count.to_string());
            cells.extend(COLUMNS.iter().map(|(_, f)| cell(r.get(f))));
            cells
        })
        .collect();
    render_table(header, body, format)
}

/// Renders the per-domain winners: domain, model, BLEU, R1 and Qual.
pub fn render_winners(winners: &[DomainWinner], format: Format) -> String {
    let header = ["Domain", "Top Model", "BLEU", "R1", "Qual."].map(String::from).to_vec();
    let body = winners
        .iter()
        .map(|w| vec![w.domain.label().to_string(), w.model.clone(), cell(w.bleu), cell(w.rouge1_f), cell(w.quality)])
        .collect();
    render_table(header, body, format)
}
