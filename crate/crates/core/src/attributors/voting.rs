use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::logistic::BinaryAttributor;
use super::result::{AttributionResult, Direction, PromptScore};
use crate::error::{invalid, Error, Result};
use crate::features::{prediction_input, InputRepr};
use crate::modelhub::ResponseTable;
use crate::promptsel::PromptSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voting {
    /// Sum of head probabilities.
    #[default]
    Soft,
    /// Count of head decisions at threshold 0.5.
    Hard,
}

pub const DECISION_THRESHOLD: f64 = 0.5;

/// Aggregates per-prompt head scores into `Σ_p h_b(m_f(p))` and takes the
/// argmax over bases. Scores are summed in the order given.
pub fn vote(
    method: &str,
    bases: Vec<String>,
    prompt_scores: Vec<PromptScore>,
    voting: Voting,
) -> Result<AttributionResult> {
    let mut scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for s in &prompt_scores {
        let v = match voting {
            Voting::Soft => s.score,
            Voting::Hard => f64::from(u8::from(s.score >= DECISION_THRESHOLD)),
        };
        *scores.entry(s.target.clone()).or_default().entry(s.base.clone()).or_insert(0.0) += v;
    }
    let mut result = AttributionResult::from_scores(method, Direction::Max, bases, scores, BTreeSet::new())?;
    result.prompt_scores = prompt_scores;
    Ok(result)
}

/// Scores every target's response to every prompt with every head.
///
/// `I_BF` heads pair their own base's response with the tested response, so
/// the table must also hold base responses for that representation.
pub fn attribute_classifier(
    heads: &[BinaryAttributor],
    table: &ResponseTable,
    prompts: &PromptSet,
    targets: &[String],
    voting: Voting,
) -> Result<AttributionResult> {
    let first = heads.first().ok_or_else(|| invalid("no attributor heads"))?;
    let repr = first.repr();
    if heads.iter().any(|h| h.repr() != repr) {
        return Err(invalid("heads trained on different input representations"));
    }
    let bases: Vec<String> = heads.iter().map(|h| h.base_id.clone()).collect();
    if bases.iter().collect::<BTreeSet<_>>().len() != bases.len() {
        return Err(Error::DuplicateId("two heads share a base".into()));
    }
    table.check_coverage(targets.iter().map(String::as_str), prompts)?;
    if repr == InputRepr::BaseAndFinetuned {
        table.check_coverage(bases.iter().map(String::as_str), prompts)?;
    }

    let mut prompt_scores = Vec::with_capacity(targets.len() * heads.len() * prompts.len());
    for target in targets {
        for head in heads {
            for p in prompts.prompts() {
                let tested = table.response(target, &p.prompt_id)?;
                let own = match repr {
                    InputRepr::BaseAndFinetuned => Some(table.response(&head.base_id, &p.prompt_id)?),
                    _ => None,
                };
                let input = prediction_input(repr, &p.text, own, tested)?;
                prompt_scores.push(PromptScore {
                    target: target.clone(),
                    base: head.base_id.clone(),
                    prompt_id: p.prompt_id.clone(),
                    score: head.score(&input),
                });
            }
        }
    }
    let method = match voting {
        Voting::Soft => "classifier",
        Voting::Hard => "classifier-hard",
    };
    vote(method, bases, prompt_scores, voting)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(target: &str, base: &str, p: usize, score: f64) -> PromptScore {
        PromptScore { target: target.into(), base: base.into(), prompt_id: format!("p{p}"), score }
    }

    #[test]
    fn own_head_wins() {
        let bases = vec!["a".to_string(), "b".to_string()];
        let scores = vec![ps("fa", "a", 0, 1.0), ps("fa", "b", 0, 0.0), ps("fb", "a", 0, 0.0), ps("fb", "b", 0, 1.0)];
        let r = vote("t", bases, scores, Voting::Soft).unwrap();
        assert_eq!(r.predicted["fa"], "a");
        assert_eq!(r.predicted["fb"], "b");
        assert!(r.ties.is_empty());
    }

    #[test]
    fn ties_go_to_lowest_base_and_are_recorded() {
        let bases = vec!["b".to_string(), "a".to_string()];
        let r = vote("t", bases, vec![ps("f", "b", 0, 0.5), ps("f", "a", 0, 0.5)], Voting::Soft).unwrap();
        assert_eq!(r.predicted["f"], "a");
        assert!(r.ties.contains("f"));
    }

    #[test]
    fn hard_voting_counts_decisions() {
        let bases = vec!["a".to_string(), "b".to_string()];
        let scores = vec![ps("f", "a", 0, 0.9), ps("f", "a", 1, 0.4), ps("f", "b", 0, 0.6), ps("f", "b", 1, 0.55)];
        assert_eq!(vote("t", bases.clone(), scores.clone(), Voting::Soft).unwrap().predicted["f"], "a");
        let hard = vote("t", bases, scores, Voting::Hard).unwrap();
        assert_eq!(hard.predicted["f"], "b");
        assert_eq!(hard.scores["f"]["b"], 2.0);
    }
}
