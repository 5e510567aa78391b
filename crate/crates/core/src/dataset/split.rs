use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ChatRecord, DatasetError};
use crate::apportion::controlled_round;
use crate::question_bank::{Domain, QuestionType};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyKey {
    Domain,
    Qtype,
}

impl std::str::FromStr for StratifyKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "domain" => Ok(StratifyKey::Domain),
            "qtype" | "question_type" => Ok(StratifyKey::Qtype),
            other => Err(format!("unknown stratify key `{other}` (expected domain or qtype)")),
        }
    }
}

/// Train/validation/test fractions, stratification keys and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    #[serde(default)]
    pub stratify: Vec<StratifyKey>,
    pub seed: u64,
}

impl SplitSpec {
    /// 80/10/10, unstratified.
    pub fn new(seed: u64) -> Self {
        Self { fractions: [0.8, 0.1, 0.1], stratify: Vec::new(), seed }
    }

    pub fn stratified(mut self, keys: &[StratifyKey]) -> Self {
        self.stratify = keys.to_vec();
        self
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(DatasetError::InvalidSplit(format!("fractions must be nonnegative: {:?}", self.fractions)));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidSplit(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<ChatRecord>,
    pub val: Vec<ChatRecord>,
    pub test: Vec<ChatRecord>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

type Stratum = (Option<Domain>, Option<QuestionType>);

/// Partitions records into train, validation and test.
///
/// Records are grouped into strata by the spec's keys. Split sizes are
/// rounded jointly over all strata: each stratum's part is the floor or
/// ceiling of its exact share, each stratum sums to its size, and each
/// split's total is the floor or ceiling of its exact global share. Leftover
/// units go to the largest remainders, ties to the earlier split, so an
/// unstratified split is plain largest remainder with surplus to train.
///
/// Membership within a stratum is a seeded shuffle; each output keeps the
/// input order.
pub fn split_dataset(records: &[ChatRecord], spec: &SplitSpec) -> Result<Split, DatasetError> {
    spec.validate()?;
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let key = |r: &ChatRecord| -> Stratum {
        (
            spec.stratify.contains(&StratifyKey::Domain).then_some(r.meta.domain),
            spec.stratify.contains(&StratifyKey::Qtype).then_some(r.meta.question_type),
        )
    };
    let mut strata: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        strata.entry(key(r)).or_default().push(i);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let alloc = controlled_round(&sizes, &spec.fractions);

    let mut part = vec![0u8; records.len()];
    for (s, (members, counts)) in strata.into_values().zip(alloc).enumerate() {
        let mut members = members;
        members.shuffle(&mut seeded(spec.seed, "split_dataset", s as u64));
        let (train, val) = (counts[0], counts[1]);
        for (k, i) in members.into_iter().enumerate() {
            part[i] = if k < train {
                0
            } else if k < train + val {
                1
            } else {
                2
            };
        }
    }
    let mut out = Split::default();
    for (r, p) in records.iter().zip(part) {
        match p {
            0 => out.train.push(r.clone()),
            1 => out.val.push(r.clone()),
            _ => out.test.push(r.clone()),
        }
    }
    Ok(out)
}
