use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Whether the best base has the highest or the lowest score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

/// One head's score for one tested model's response to one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptScore {
    pub target: String,
    pub base: String,
    pub prompt_id: String,
    pub score: f64,
}

/// Score matrix over (tested model, base) and the mapping it induces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub method: String,
    pub direction: Direction,
    pub bases: Vec<String>,
    /// `scores[target][base]`.
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
    pub predicted: BTreeMap<String, String>,
    /// Targets whose best score was attained by more than one base. The
    /// prediction for these is the lexicographically lowest of them.
    pub ties: BTreeSet<String>,
    /// Targets with no usable evidence; absent from `predicted`.
    pub unattributable: BTreeSet<String>,
    /// Per-prompt head scores, for methods that have them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompt_scores: Vec<PromptScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AttributionResult {
    /// Picks the best base per row. Rows listed in `unattributable` get no
    /// prediction.
    pub fn from_scores(
        method: impl Into<String>,
        direction: Direction,
        bases: Vec<String>,
        scores: BTreeMap<String, BTreeMap<String, f64>>,
        unattributable: BTreeSet<String>,
    ) -> Result<Self> {
        let mut bases = bases;
        bases.sort();
        bases.dedup();
        if bases.is_empty() {
            return Err(invalid("attribution needs at least one base model"));
        }
        let mut predicted = BTreeMap::new();
        let mut ties = BTreeSet::new();
        for (target, row) in &scores {
            if unattributable.contains(target) {
                continue;
            }
            if row.len() != bases.len() || bases.iter().any(|b| !row.contains_key(b)) {
                return Err(invalid(format!("score row for `{target}` does not cover every base")));
            }
            if let Some(v) = row.values().find(|v| v.is_nan()) {
                return Err(invalid(format!("score row for `{target}` contains {v}")));
            }
            let best = match direction {
                Direction::Max => row.values().copied().fold(f64::NEG_INFINITY, f64::max),
                Direction::Min => row.values().copied().fold(f64::INFINITY, f64::min),
            };
            let winners: Vec<&String> = row.iter().filter(|(_, &v)| v == best).map(|(b, _)| b).collect();
            if winners.len() > 1 {
                ties.insert(target.clone());
            }
            predicted.insert(target.clone(), winners[0].clone());
        }
        Ok(Self {
            method: method.into(),
            direction,
            bases,
            scores,
            predicted,
            ties,
            unattributable,
            prompt_scores: Vec::new(),
            notes: Vec::new(),
        })
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.scores.keys().map(String::as_str)
    }

    pub fn score(&self, target: &str, base: &str) -> Option<f64> {
        self.scores.get(target)?.get(base).copied()
    }
}
