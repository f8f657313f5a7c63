use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::result::{AttributionResult, Direction};
use crate::error::{invalid, Result};
use crate::modelhub::ResponseTable;
use crate::promptsel::PromptSet;
use crate::simlm::Corpus;
use crate::text::normalize;

/// Word sets of the public pretraining corpora, keyed by corpus tag.
#[derive(Debug, Clone, Default)]
pub struct TagVocabulary {
    words: BTreeMap<String, HashSet<String>>,
}

impl TagVocabulary {
    pub fn from_corpora<'a>(corpora: impl IntoIterator<Item = &'a Corpus>) -> Self {
        let mut words: BTreeMap<String, HashSet<String>> = BTreeMap::new();
        for c in corpora {
            let set = words.entry(c.tag.clone()).or_default();
            for d in c.documents() {
                set.extend(normalize(d).split_whitespace().map(str::to_string));
            }
        }
        Self { words }
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.words.keys().map(String::as_str)
    }

    /// Fraction of the text's words found in each tag's vocabulary.
    fn overlap(&self, text: &str) -> BTreeMap<String, (usize, usize)> {
        let norm = normalize(text);
        let words: Vec<&str> = norm.split_whitespace().collect();
        self.words
            .iter()
            .map(|(tag, set)| (tag.clone(), (words.iter().filter(|w| set.contains(**w)).count(), words.len())))
            .collect()
    }
}

/// Behavioural statistics of one model over one prompt set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicProfile {
    pub model_id: String,
    pub prompt_set_id: String,
    pub length_mean: f64,
    pub length_std: f64,
    pub repetition: f64,
    pub latency_mean: f64,
    pub numeric: f64,
    /// Per corpus tag, the fraction of response words in that tag's vocabulary.
    pub vocab_overlap: BTreeMap<String, f64>,
}

/// Largest fraction of `chars` covered by ≥ 2 back-to-back copies of a unit
/// at its end.
pub fn repetition_rate(text: &str) -> f64 {
    let t: Vec<char> = normalize(text).chars().collect();
    let n = t.len();
    let mut best = 0usize;
    for u in 1..=n / 2 {
        let unit = &t[n - u..];
        let mut copies = 1;
        while (copies + 1) * u <= n && &t[n - (copies + 1) * u..n - copies * u] == unit {
            copies += 1;
        }
        if copies >= 2 {
            best = best.max(copies * u);
        }
    }
    if n == 0 {
        0.0
    } else {
        best as f64 / n as f64
    }
}

impl HeuristicProfile {
    pub fn compute(model_id: &str, table: &ResponseTable, prompts: &PromptSet, vocab: &TagVocabulary) -> Result<Self> {
        table.check_coverage([model_id], prompts)?;
        let mut lengths = Vec::new();
        let mut repetition = 0.0;
        let mut latency = 0.0;
        let (mut digits, mut chars) = (0usize, 0usize);
        let mut overlap: BTreeMap<String, (usize, usize)> = vocab.tags().map(|t| (t.to_string(), (0, 0))).collect();
        for p in prompts.ids() {
            let rec = table.get(model_id, p).expect("coverage checked");
            let norm = normalize(&rec.response);
            lengths.push(norm.chars().count() as f64);
            repetition += repetition_rate(&rec.response);
            latency += rec.latency_micros as f64;
            digits += norm.chars().filter(char::is_ascii_digit).count();
            chars += norm.chars().count();
            for (tag, (hit, total)) in vocab.overlap(&rec.response) {
                let e = overlap.get_mut(&tag).expect("same tags");
                e.0 += hit;
                e.1 += total;
            }
        }
        let n = prompts.len() as f64;
        let mean = lengths.iter().sum::<f64>() / n;
        let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Ok(Self {
            model_id: model_id.into(),
            prompt_set_id: prompts.id.clone(),
            length_mean: mean,
            length_std: var.sqrt(),
            repetition: repetition / n,
            latency_mean: latency / n,
            numeric: ratio(digits, chars),
            vocab_overlap: overlap.into_iter().map(|(t, (h, w))| (t, ratio(h, w))).collect(),
        })
    }

    fn features(&self, w: &HeuristicWeights) -> Vec<(String, f64, f64)> {
        let mut f = vec![
            ("length_mean".to_string(), self.length_mean, w.length_mean),
            ("length_std".to_string(), self.length_std, w.length_std),
            ("repetition".to_string(), self.repetition, w.repetition),
            ("latency_mean".to_string(), self.latency_mean, w.latency),
            ("numeric".to_string(), self.numeric, w.numeric),
        ];
        f.extend(self.vocab_overlap.iter().map(|(t, v)| (format!("vocab:{t}"), *v, w.vocab_overlap)));
        f
    }
}

/// Feature weights. Latency defaults to 0 because wall-clock timings are not
/// reproducible between runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicWeights {
    pub length_mean: f64,
    pub length_std: f64,
    pub repetition: f64,
    pub latency: f64,
    pub numeric: f64,
    pub vocab_overlap: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        Self { length_mean: 1.0, length_std: 1.0, repetition: 1.0, latency: 0.0, numeric: 1.0, vocab_overlap: 1.0 }
    }
}

/// Scores `−sqrt(Σ w (z_f − z_b)²)` over features standardized across all
/// profiles (population std). Constant features are dropped.
pub fn attribute_heuristic(
    bases: &[HeuristicProfile],
    targets: &[HeuristicProfile],
    weights: &HeuristicWeights,
) -> Result<AttributionResult> {
    let all: Vec<&HeuristicProfile> = bases.iter().chain(targets).collect();
    let first = all.first().ok_or_else(|| invalid("no profiles"))?;
    if let Some(p) = all.iter().find(|p| p.prompt_set_id != first.prompt_set_id) {
        return Err(invalid(format!(
            "profiles come from different prompt sets (`{}` vs `{}`)",
            first.prompt_set_id, p.prompt_set_id
        )));
    }
    if [
        weights.length_mean,
        weights.length_std,
        weights.repetition,
        weights.latency,
        weights.numeric,
        weights.vocab_overlap,
    ]
    .iter()
    .any(|w| !(w.is_finite() && *w >= 0.0))
    {
        return Err(invalid("heuristic weights must be finite and non-negative"));
    }
    let feats: Vec<Vec<(String, f64, f64)>> = all.iter().map(|p| p.features(weights)).collect();
    if feats.iter().any(|f| f.len() != feats[0].len()) {
        return Err(invalid("profiles disagree on corpus tags"));
    }
    let n = all.len() as f64;
    let mut kept = Vec::new();
    let mut notes = Vec::new();
    for k in 0..feats[0].len() {
        let mean = feats.iter().map(|f| f[k].1).sum::<f64>() / n;
        let std = (feats.iter().map(|f| (f[k].1 - mean).powi(2)).sum::<f64>() / n).sqrt();
        if std > 0.0 {
            kept.push((k, mean, std));
        } else {
            log::info!("dropping constant heuristic feature {}", feats[0][k].0);
            notes.push(format!("dropped constant feature {}", feats[0][k].0));
        }
    }
    let z = |i: usize| -> Vec<(f64, f64)> {
        kept.iter().map(|&(k, mean, std)| ((feats[i][k].1 - mean) / std, feats[i][k].2)).collect()
    };
    let mut scores = BTreeMap::new();
    for (ti, t) in targets.iter().enumerate() {
        let zt = z(bases.len() + ti);
        let row = bases
            .iter()
            .enumerate()
            .map(|(bi, b)| {
                let d2: f64 = z(bi).iter().zip(&zt).map(|((zb, w), (zf, _))| w * (zf - zb).powi(2)).sum();
                (b.model_id.clone(), -d2.sqrt())
            })
            .collect();
        scores.insert(t.model_id.clone(), row);
    }
    let ids = bases.iter().map(|b| b.model_id.clone()).collect();
    let mut r = AttributionResult::from_scores("heuristic", Direction::Max, ids, scores, BTreeSet::new())?;
    r.notes = notes;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(id: &str, len: f64, rep: f64) -> HeuristicProfile {
        HeuristicProfile {
            model_id: id.into(),
            prompt_set_id: "p".into(),
            length_mean: len,
            length_std: 1.0,
            repetition: rep,
            latency_mean: 0.0,
            numeric: 0.0,
            vocab_overlap: BTreeMap::new(),
        }
    }

    #[test]
    fn repetition_rate_cases() {
        assert_eq!(repetition_rate("abcabcabc"), 1.0);
        assert_eq!(repetition_rate("xyzabab"), 4.0 / 7.0);
        assert_eq!(repetition_rate("abcd"), 0.0);
        assert_eq!(repetition_rate(""), 0.0);
        assert_eq!(repetition_rate("aaaa"), 1.0);
    }

    #[test]
    fn hand_computed_three_model_fixture() {
        // length_mean over {10, 20, 12}: mean 14, population std sqrt(56/3).
        // repetition over {0, 0.5, 0.1}: mean 0.2, std sqrt(0.14/3).
        let bases = [profile("a", 10.0, 0.0), profile("b", 20.0, 0.5)];
        let f = [profile("f", 12.0, 0.1)];
        let r = attribute_heuristic(&bases, &f, &HeuristicWeights::default()).unwrap();
        let (sl, sr) = ((56.0f64 / 3.0).sqrt(), (0.14f64 / 3.0).sqrt());
        let d = |l: f64, rep: f64| -((((12.0 - l) / sl).powi(2) + ((0.1 - rep) / sr).powi(2)).sqrt());
        assert!((r.scores["f"]["a"] - d(10.0, 0.0)).abs() < 1e-12);
        assert!((r.scores["f"]["b"] - d(20.0, 0.5)).abs() < 1e-12);
        assert_eq!(r.predicted["f"], "a");
        assert_eq!(r.notes.len(), 3);
    }

    #[test]
    fn single_feature_separation_under_any_positive_weight() {
        let bases = [profile("a", 10.0, 0.0), profile("b", 30.0, 0.0)];
        let f = [profile("f", 29.0, 0.0)];
        for w in [0.01, 1.0, 100.0] {
            let weights = HeuristicWeights { length_mean: w, ..Default::default() };
            assert_eq!(attribute_heuristic(&bases, &f, &weights).unwrap().predicted["f"], "b");
        }
    }

    #[test]
    fn identical_profile_wins() {
        let bases = [profile("a", 10.0, 0.2), profile("b", 11.0, 0.3), profile("c", 5.0, 0.9)];
        let f = [HeuristicProfile { model_id: "f".into(), ..bases[1].clone() }];
        let r = attribute_heuristic(&bases, &f, &HeuristicWeights::default()).unwrap();
        assert_eq!(r.predicted["f"], "b");
        assert_eq!(r.scores["f"]["b"], 0.0);
    }
}
