use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::roc::{roc, RocCurve};
use crate::attributors::{AttributionResult, DECISION_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::modelhub::ModelRegistry;

/// Prompt-level quality of one head at threshold 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMetrics {
    pub base: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the head saw only one class.
    pub auc: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    /// Targets attributed to their true base without a tie.
    pub tp: usize,
    pub targets: usize,
    pub ties: usize,
    pub unattributable: usize,
    pub correct: BTreeMap<String, bool>,
    pub heads: Vec<HeadMetrics>,
    pub mean_auc: Option<f64>,
}

impl MetricsReport {
    pub fn head(&self, base: &str) -> Option<&HeadMetrics> {
        self.heads.iter().find(|h| h.base == base)
    }
}

pub fn precision_recall_f1(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Per-head prompt-level ROC curves, for results that carry prompt scores.
pub fn head_rocs(result: &AttributionResult, truth: &BTreeMap<String, String>) -> BTreeMap<String, RocCurve> {
    result
        .bases
        .iter()
        .filter_map(|b| {
            let scored: Vec<(f64, bool)> = result
                .prompt_scores
                .iter()
                .filter(|s| &s.base == b)
                .map(|s| (s.score, truth.get(&s.target) == Some(b)))
                .collect();
            roc(&scored).ok().map(|c| (b.clone(), c))
        })
        .collect()
}

/// Lineage of each target. Only evaluation may see this.
pub fn ground_truth(registry: &ModelRegistry, targets: &[String]) -> Result<BTreeMap<String, String>> {
    targets
        .iter()
        .map(|t| {
            let b = registry.ground_truth(t).ok_or_else(|| Error::UnknownModel(t.clone()))?;
            Ok((t.clone(), b.to_string()))
        })
        .collect()
}

/// Compares predictions with lineage. A tied target never counts as correct.
pub fn score_attribution(
    result: &AttributionResult,
    registry: &ModelRegistry,
    targets: &[String],
) -> Result<MetricsReport> {
    let truth = ground_truth(registry, targets)?;
    score_against(result, &truth)
}

pub fn score_against(result: &AttributionResult, truth: &BTreeMap<String, String>) -> Result<MetricsReport> {
    if let Some(t) = truth.keys().find(|t| !result.scores.contains_key(*t)) {
        return Err(invalid(format!("result has no row for `{t}`")));
    }
    let correct: BTreeMap<String, bool> = truth
        .iter()
        .map(|(t, b)| (t.clone(), result.predicted.get(t) == Some(b) && !result.ties.contains(t)))
        .collect();
    let rocs = head_rocs(result, truth);
    let heads: Vec<HeadMetrics> = if result.prompt_scores.is_empty() {
        Vec::new()
    } else {
        result
            .bases
            .iter()
            .map(|b| {
                let (mut tp, mut fp, mut fn_, mut pos, mut neg) = (0, 0, 0, 0, 0);
                for s in result.prompt_scores.iter().filter(|s| &s.base == b && truth.contains_key(&s.target)) {
                    let label = truth.get(&s.target) == Some(b);
                    let decision = s.score >= DECISION_THRESHOLD;
                    if label {
                        pos += 1;
                    } else {
                        neg += 1;
                    }
                    match (label, decision) {
                        (true, true) => tp += 1,
                        (false, true) => fp += 1,
                        (true, false) => fn_ += 1,
                        (false, false) => {}
                    }
                }
                let (precision, recall, f1) = precision_recall_f1(tp, fp, fn_);
                HeadMetrics {
                    base: b.clone(),
                    precision,
                    recall,
                    f1,
                    auc: rocs.get(b).map(|c| c.auc),
                    positives: pos,
                    negatives: neg,
                }
            })
            .collect()
    };
    let aucs: Vec<f64> = heads.iter().filter_map(|h| h.auc).collect();
    Ok(MetricsReport {
        method: result.method.clone(),
        tp: correct.values().filter(|c| **c).count(),
        targets: truth.len(),
        ties: truth.keys().filter(|t| result.ties.contains(*t)).count(),
        unattributable: truth.keys().filter(|t| result.unattributable.contains(*t)).count(),
        correct,
        heads,
        mean_auc: if aucs.is_empty() { None } else { Some(aucs.iter().sum::<f64>() / aucs.len() as f64) },
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::attributors::Direction;

    fn identity_result(n: usize, swap: bool) -> (AttributionResult, BTreeMap<String, String>) {
        let bases: Vec<String> = (0..n).map(|i| format!("b{i}")).collect();
        let mut scores = BTreeMap::new();
        let mut truth = BTreeMap::new();
        for i in 0..n {
            let mut j = i;
            if swap && i < 2 {
                j = 1 - i;
            }
            let row = bases.iter().enumerate().map(|(k, b)| (b.clone(), if k == j { 1.0 } else { 0.0 })).collect();
            scores.insert(format!("f{i}"), row);
            truth.insert(format!("f{i}"), bases[i].clone());
        }
        (AttributionResult::from_scores("t", Direction::Max, bases, scores, BTreeSet::new()).unwrap(), truth)
    }

    #[test]
    fn one_swap_costs_two() {
        let (r, truth) = identity_result(6, true);
        assert_eq!(score_against(&r, &truth).unwrap().tp, 4);
        let (r, truth) = identity_result(6, false);
        assert_eq!(score_against(&r, &truth).unwrap().tp, 6);
    }

    #[test]
    fn missing_target_rejected() {
        let (r, mut truth) = identity_result(2, false);
        truth.insert("ghost".into(), "b0".into());
        assert!(score_against(&r, &truth).is_err());
    }

    #[test]
    fn tie_is_never_correct() {
        let mut scores = BTreeMap::new();
        scores.insert("f".to_string(), [("a".to_string(), 1.0), ("b".to_string(), 1.0)].into_iter().collect());
        let r =
            AttributionResult::from_scores("t", Direction::Max, vec!["a".into(), "b".into()], scores, BTreeSet::new())
                .unwrap();
        let truth = [("f".to_string(), "a".to_string())].into_iter().collect();
        let m = score_against(&r, &truth).unwrap();
        assert_eq!((m.tp, m.ties), (0, 1));
    }

    #[test]
    fn f1_edge_cases() {
        assert_eq!(precision_recall_f1(0, 0, 0), (0.0, 0.0, 0.0));
        assert_eq!(precision_recall_f1(2, 0, 0), (1.0, 1.0, 1.0));
        let (_, _, f1) = precision_recall_f1(1, 1, 1);
        assert!((f1 - 0.5).abs() < 1e-15);
    }
}
