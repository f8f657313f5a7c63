use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::result::{AttributionResult, Direction};
use crate::error::{invalid, Result};
use crate::features::{build_input, embed, EmbedConfig, FeatureVector, InputRepr};
use crate::modelhub::ResponseTable;
use crate::promptsel::PromptSet;
use crate::seed;

pub const DEFAULT_MARGIN: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletConfig {
    pub embed: EmbedConfig,
    pub margin: f64,
    pub epochs: usize,
    pub lr: f64,
    pub triplets_per_anchor: usize,
    /// Output width of the learned projection; `None` keeps raw embeddings.
    pub projection_dim: Option<usize>,
    pub seed: u64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            embed: EmbedConfig { dim: 1 << 12, ..EmbedConfig::default() },
            margin: DEFAULT_MARGIN,
            epochs: 5,
            lr: 0.05,
            triplets_per_anchor: 10,
            projection_dim: Some(64),
            seed: 0,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(invalid(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.projection_dim == Some(0) {
            return Err(invalid("projection_dim must be positive"));
        }
        Ok(())
    }
}

/// Linear map `in_dim → out_dim`, stored column-major so sparse inputs touch
/// contiguous runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `weights[j * out_dim + o]` maps input `j` to output `o`.
    pub weights: Vec<f64>,
}

impl Projection {
    pub fn random(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let normal = Normal::new(0.0, (1.0 / out_dim as f64).sqrt()).expect("valid std");
        let mut rng = seed::derived_rng(seed, "triplet/init");
        let weights = (0..in_dim * out_dim).map(|_| normal.sample(&mut rng)).collect();
        Self { in_dim, out_dim, weights }
    }

    pub fn apply(&self, x: &FeatureVector) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        for &(j, v) in x.entries() {
            let col = &self.weights[j as usize * self.out_dim..][..self.out_dim];
            out.iter_mut().zip(col).for_each(|(o, w)| *o += w * v);
        }
        out
    }

    /// `W -= lr · g xᵀ`.
    fn step(&mut self, g: &[f64], x: &FeatureVector, lr: f64) {
        for &(j, v) in x.entries() {
            let col = &mut self.weights[j as usize * self.out_dim..][..self.out_dim];
            col.iter_mut().zip(g).for_each(|(w, gi)| *w -= lr * gi * v);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cos_dense(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot(u, v) / (nu * nv)
    }
}

/// Gradients of `cos(u, v)` with respect to `u` and `v`.
fn cos_grads(u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        return (vec![0.0; u.len()], vec![0.0; v.len()]);
    }
    let c = dot(u, v) / (nu * nv);
    let gu = u.iter().zip(v).map(|(ui, vi)| vi / (nu * nv) - c * ui / (nu * nu)).collect();
    let gv = u.iter().zip(v).map(|(ui, vi)| ui / (nu * nv) - c * vi / (nv * nv)).collect();
    (gu, gv)
}

/// `max(0, d(a,p) − d(a,n) + margin)` with `d = 1 − cosine`.
pub fn triplet_loss(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}

/// Loss of one triplet under `proj` and the gradients (output-space vectors)
/// to apply at each of the three inputs.
fn loss_and_output_grads(
    proj: &Projection,
    a: &FeatureVector,
    p: &FeatureVector,
    n: &FeatureVector,
    margin: f64,
) -> (f64, Option<[Vec<f64>; 3]>) {
    let (ua, up, un) = (proj.apply(a), proj.apply(p), proj.apply(n));
    let loss = triplet_loss(1.0 - cos_dense(&ua, &up), 1.0 - cos_dense(&ua, &un), margin);
    if loss <= 0.0 {
        return (0.0, None);
    }
    // L = cos(a,n) − cos(a,p) + margin on the active side.
    let (ga_p, gp) = cos_grads(&ua, &up);
    let (ga_n, gn) = cos_grads(&ua, &un);
    let ga = ga_n.iter().zip(&ga_p).map(|(x, y)| x - y).collect();
    let gp = gp.into_iter().map(|x| -x).collect();
    (loss, Some([ga, gp, gn]))
}

/// Triplet loss and its dense gradient with respect to the projection
/// weights (same layout as [`Projection::weights`]).
pub fn triplet_loss_and_grad(
    proj: &Projection,
    a: &FeatureVector,
    p: &FeatureVector,
    n: &FeatureVector,
    margin: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; proj.weights.len()];
    let (loss, grads) = loss_and_output_grads(proj, a, p, n, margin);
    if let Some(gs) = grads {
        for (g, x) in gs.iter().zip([a, p, n]) {
            for &(j, v) in x.entries() {
                let col = &mut grad[j as usize * proj.out_dim..][..proj.out_dim];
                col.iter_mut().zip(g).for_each(|(c, gi)| *c += gi * v);
            }
        }
    }
    (loss, grad)
}

/// Nearest-reference attribution in a (optionally learned) embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletAttributor {
    pub config: TripletConfig,
    pub projection: Option<Projection>,
    pub references: Vec<(FeatureVector, String)>,
    /// Mean triplet loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Learns the projection by SGD over sampled triplets: for each anchor,
/// `triplets_per_anchor` times, a uniform same-label positive and a negative
/// from a uniformly chosen other label.
pub fn train_triplet(examples: &[(String, String)], cfg: &TripletConfig) -> Result<TripletAttributor> {
    cfg.validate()?;
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (_, label)) in examples.iter().enumerate() {
        by_label.entry(label).or_default().push(i);
    }
    if by_label.len() < 2 {
        return Err(invalid("triplet training needs at least two labels"));
    }
    if let Some((l, _)) = by_label.iter().find(|(_, v)| v.len() < 2) {
        return Err(invalid(format!("label `{l}` has a single example, so no positive pair exists")));
    }
    let e = cfg.embed;
    let xs: Vec<FeatureVector> = examples.iter().map(|(t, _)| embed(t, e.dim, e.ngram_lo, e.ngram_hi)).collect();
    let labels: Vec<&str> = by_label.keys().copied().collect();

    let mut projection = cfg.projection_dim.map(|out| Projection::random(e.dim, out, cfg.seed));
    let mut loss_history = Vec::new();
    if let Some(proj) = projection.as_mut() {
        let mut rng = seed::derived_rng(cfg.seed, "triplet/sample");
        for _ in 0..cfg.epochs {
            let mut total = 0.0;
            let mut count = 0usize;
            for (ai, (_, label)) in examples.iter().enumerate() {
                let same = &by_label[label.as_str()];
                for _ in 0..cfg.triplets_per_anchor {
                    let pi = loop {
                        let c = same[rng.random_range(0..same.len())];
                        if c != ai {
                            break c;
                        }
                    };
                    let neg_label = loop {
                        let l = labels[rng.random_range(0..labels.len())];
                        if l != label {
                            break l;
                        }
                    };
                    let negs = &by_label[neg_label];
                    let ni = negs[rng.random_range(0..negs.len())];
                    let (loss, grads) = loss_and_output_grads(proj, &xs[ai], &xs[pi], &xs[ni], cfg.margin);
                    total += loss;
                    count += 1;
                    if let Some([ga, gp, gn]) = grads {
                        proj.step(&ga, &xs[ai], cfg.lr);
                        proj.step(&gp, &xs[pi], cfg.lr);
                        proj.step(&gn, &xs[ni], cfg.lr);
                    }
                }
            }
            let mean = total / count as f64;
            if !mean.is_finite() {
                return Err(invalid(format!("non-finite triplet loss (lr {})", cfg.lr)));
            }
            loss_history.push(mean);
        }
    }
    Ok(TripletAttributor {
        config: *cfg,
        projection,
        references: xs.into_iter().zip(examples.iter().map(|(_, l)| l.clone())).collect(),
        loss_history,
    })
}

impl TripletAttributor {
    fn space(&self, x: &FeatureVector) -> Vec<f64> {
        match &self.projection {
            Some(p) => p.apply(x),
            None => x.to_dense(),
        }
    }

    pub fn embed(&self, text: &str) -> FeatureVector {
        let e = self.config.embed;
        embed(text, e.dim, e.ngram_lo, e.ngram_hi)
    }

    /// Label of the most similar reference; the earliest one on equal similarity.
    pub fn nearest(&self, x: &FeatureVector) -> Option<&str> {
        self.nearest_in(&self.projected_references(), x)
    }

    fn projected_references(&self) -> Vec<Vec<f64>> {
        self.references.iter().map(|(r, _)| self.space(r)).collect()
    }

    fn nearest_in(&self, refs: &[Vec<f64>], x: &FeatureVector) -> Option<&str> {
        let q = self.space(x);
        let mut best: Option<(f64, usize)> = None;
        for (i, r) in refs.iter().enumerate() {
            let c = cos_dense(&q, r);
            if best.is_none_or(|(b, _)| c > b) {
                best = Some((c, i));
            }
        }
        best.map(|(_, i)| self.references[i].1.as_str())
    }
}

/// Each response votes for the label of its nearest reference; the plurality
/// label wins.
pub fn attribute_triplet(
    model: &TripletAttributor,
    table: &ResponseTable,
    prompts: &PromptSet,
    targets: &[String],
) -> Result<AttributionResult> {
    if model.references.is_empty() {
        return Err(invalid("triplet attributor has no references"));
    }
    table.check_coverage(targets.iter().map(String::as_str), prompts)?;
    let bases: BTreeSet<String> = model.references.iter().map(|(_, l)| l.clone()).collect();
    let refs = model.projected_references();
    let mut scores = BTreeMap::new();
    for t in targets {
        let mut row: BTreeMap<String, f64> = bases.iter().map(|b| (b.clone(), 0.0)).collect();
        for p in prompts.prompts() {
            let input = build_input(InputRepr::Base, &p.text, Some(table.response(t, &p.prompt_id)?), None)?;
            if let Some(label) = model.nearest_in(&refs, &model.embed(&input)) {
                *row.get_mut(label).expect("reference label") += 1.0;
            }
        }
        scores.insert(t.clone(), row);
    }
    AttributionResult::from_scores("triplet", Direction::Max, bases.into_iter().collect(), scores, BTreeSet::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_constants() {
        assert_eq!(triplet_loss(0.3, 0.3, DEFAULT_MARGIN), 0.4);
        assert_eq!(triplet_loss(0.0, 1.0, DEFAULT_MARGIN), 0.0);
    }

    #[test]
    fn single_example_label_rejected() {
        let ex = vec![("aa".to_string(), "a".to_string()), ("ab".into(), "a".into()), ("zz".into(), "z".into())];
        assert!(train_triplet(&ex, &TripletConfig::default()).is_err());
    }

    #[test]
    fn query_equal_to_reference_takes_its_label() {
        let ex: Vec<(String, String)> =
            [("alpha beta", "a"), ("alpha gamma", "a"), ("zeta eta", "z"), ("zeta theta", "z")]
                .iter()
                .map(|(t, l)| (t.to_string(), l.to_string()))
                .collect();
        let cfg = TripletConfig {
            embed: EmbedConfig { dim: 256, ngram_lo: 1, ngram_hi: 2 },
            projection_dim: Some(8),
            ..Default::default()
        };
        let m = train_triplet(&ex, &cfg).unwrap();
        for (t, l) in &ex {
            assert_eq!(m.nearest(&m.embed(t)), Some(l.as_str()));
        }
    }

    #[test]
    fn training_reduces_loss_on_separable_labels() {
        let ex: Vec<(String, String)> =
            (0..12)
                .map(|i| {
                    if i % 2 == 0 {
                        (format!("abc abd {i}"), "a".into())
                    } else {
                        (format!("xyz xyw {i}"), "x".into())
                    }
                })
                .collect();
        let cfg = TripletConfig {
            embed: EmbedConfig { dim: 512, ngram_lo: 1, ngram_hi: 3 },
            epochs: 10,
            projection_dim: Some(4),
            ..Default::default()
        };
        let m = train_triplet(&ex, &cfg).unwrap();
        let h = &m.loss_history;
        assert!(h.last().unwrap() < h.first().unwrap(), "{h:?}");
    }
}
