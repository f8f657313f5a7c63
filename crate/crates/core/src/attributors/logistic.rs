use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingSet;
use crate::error::{invalid, Error, Result};
use crate::features::{embed, EmbedConfig, FeatureVector, InputRepr};
use crate::modelhub::KnowledgeLevel;
use crate::seed;

/// Optimizer settings shared by both training stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub embed: EmbedConfig,
    pub epochs: usize,
    pub lr: f64,
    /// `None` weighs positives by `n_neg / n_pos`.
    pub pos_weight: Option<f64>,
    pub seed: u64,
    /// Learning-rate multiplier for the stage that follows pretraining.
    pub finetune_lr_factor: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { embed: EmbedConfig::default(), epochs: 5, lr: 0.1, pos_weight: None, seed: 0, finetune_lr_factor: 0.1 }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.finetune_lr_factor > 0.0 && self.finetune_lr_factor.is_finite()) {
            return Err(invalid("finetune_lr_factor must be positive"));
        }
        if let Some(w) = self.pos_weight {
            if !(w > 0.0 && w.is_finite()) {
                return Err(invalid(format!("pos_weight must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub prompt_set_id: String,
    pub epochs: usize,
    pub lr: f64,
    pub pos_weight: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Weighted training loss before the first epoch and after each epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub repr: InputRepr,
    pub level: KnowledgeLevel,
    pub seed: u64,
    pub embed: EmbedConfig,
    pub pretrain: Option<StageMeta>,
    pub train: StageMeta,
}

/// A one-vs-rest head: `σ(w·x + b)` over hashed n-gram features.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryAttributor {
    pub base_id: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: TrainingMeta,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(z)` without overflow.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Class-weighted mean cross-entropy and its gradient.
///
/// `loss = Σ cᵢ ℓ(w·xᵢ + b, yᵢ) / Σ cᵢ` with `cᵢ = pos_weight` for positives
/// and 1 otherwise.
pub fn weighted_loss_and_grad(
    weights: &[f64],
    bias: f64,
    xs: &[FeatureVector],
    ys: &[bool],
    pos_weight: f64,
) -> (f64, Vec<f64>, f64) {
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    let mut loss = 0.0;
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let c = if y { pos_weight } else { 1.0 };
        let z = x.dot_dense(weights) + bias;
        loss += c * if y { softplus_neg(z) } else { softplus_neg(-z) };
        let g = c * (sigmoid(z) - if y { 1.0 } else { 0.0 });
        for &(i, v) in x.entries() {
            grad[i as usize] += g * v;
        }
        grad_b += g;
        total += c;
    }
    if total > 0.0 {
        loss /= total;
        grad.iter_mut().for_each(|g| *g /= total);
        grad_b /= total;
    }
    (loss, grad, grad_b)
}

fn weighted_loss(weights: &[f64], bias: f64, xs: &[FeatureVector], ys: &[bool], pos_weight: f64) -> f64 {
    let mut loss = 0.0;
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let c = if y { pos_weight } else { 1.0 };
        let z = x.dot_dense(weights) + bias;
        loss += c * if y { softplus_neg(z) } else { softplus_neg(-z) };
        total += c;
    }
    loss / total
}

struct Stage<'a> {
    set: &'a TrainingSet,
    lr: f64,
    label: &'static str,
}

fn embed_set(set: &TrainingSet, cfg: &EmbedConfig) -> (Vec<FeatureVector>, Vec<bool>) {
    set.examples.iter().map(|e| (embed(&e.text, cfg.dim, cfg.ngram_lo, cfg.ngram_hi), e.label)).unzip()
}

fn run_stage(weights: &mut [f64], bias: &mut f64, stage: Stage<'_>, cfg: &HeadConfig) -> Result<StageMeta> {
    let (positives, negatives) = (stage.set.positives(), stage.set.negatives());
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    let pos_weight = cfg.pos_weight.unwrap_or(negatives as f64 / positives as f64);
    let (xs, ys) = embed_set(stage.set, &cfg.embed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = seed::derived_rng(cfg.seed, stage.label);
    let mut history = vec![weighted_loss(weights, *bias, &xs, &ys, pos_weight)];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let c = if ys[i] { pos_weight } else { 1.0 };
            let z = xs[i].dot_dense(weights) + *bias;
            let g = c * (sigmoid(z) - if ys[i] { 1.0 } else { 0.0 });
            for &(j, v) in xs[i].entries() {
                weights[j as usize] -= stage.lr * g * v;
            }
            *bias -= stage.lr * g;
        }
        history.push(weighted_loss(weights, *bias, &xs, &ys, pos_weight));
    }
    if let Some(bad) = history.iter().find(|l| !l.is_finite()) {
        return Err(invalid(format!("non-finite training loss {bad} (lr {})", stage.lr)));
    }
    Ok(StageMeta {
        prompt_set_id: stage.set.prompt_set_id.clone(),
        epochs: cfg.epochs,
        lr: stage.lr,
        pos_weight,
        positives,
        negatives,
        loss_history: history,
    })
}

/// Seeded SGD on the class-weighted cross-entropy, starting from zero.
pub fn train_binary(set: &TrainingSet, cfg: &HeadConfig) -> Result<BinaryAttributor> {
    pretrain_then_finetune(None, set, cfg)
}

/// Trains on `pretrain` (typically P2 responses), then continues on
/// `finetune` (P1) with the learning rate scaled by `finetune_lr_factor`.
///
/// An absent or empty pretrain set gives exactly [`train_binary`].
pub fn pretrain_then_finetune(
    pretrain: Option<&TrainingSet>,
    finetune: &TrainingSet,
    cfg: &HeadConfig,
) -> Result<BinaryAttributor> {
    cfg.validate()?;
    let pretrain = pretrain.filter(|p| !p.is_empty());
    if let Some(p) = pretrain {
        if p.base_id != finetune.base_id || p.repr != finetune.repr || p.level != finetune.level {
            return Err(invalid("pretrain and finetune sets must share base, representation and level"));
        }
    }
    let mut weights = vec![0.0; cfg.embed.dim];
    let mut bias = 0.0;
    let pre_meta = match pretrain {
        Some(set) => Some(run_stage(&mut weights, &mut bias, Stage { set, lr: cfg.lr, label: "sgd/pretrain" }, cfg)?),
        None => None,
    };
    let lr = if pre_meta.is_some() { cfg.lr * cfg.finetune_lr_factor } else { cfg.lr };
    let train_meta = run_stage(&mut weights, &mut bias, Stage { set: finetune, lr, label: "sgd" }, cfg)?;
    Ok(BinaryAttributor {
        base_id: finetune.base_id.clone(),
        weights,
        bias,
        meta: TrainingMeta {
            repr: finetune.repr,
            level: finetune.level,
            seed: cfg.seed,
            embed: cfg.embed,
            pretrain: pre_meta,
            train: train_meta,
        },
    })
}

impl BinaryAttributor {
    /// An untrained head (all zeros), scoring 0.5 everywhere.
    pub fn zeroed(base_id: impl Into<String>, meta: TrainingMeta) -> Self {
        Self { base_id: base_id.into(), weights: vec![0.0; meta.embed.dim], bias: 0.0, meta }
    }

    pub fn repr(&self) -> InputRepr {
        self.meta.repr
    }

    pub fn score_vector(&self, x: &FeatureVector) -> f64 {
        sigmoid(x.dot_dense(&self.weights) + self.bias)
    }

    pub fn score(&self, input: &str) -> f64 {
        let e = &self.meta.embed;
        self.score_vector(&embed(input, e.dim, e.ngram_lo, e.ngram_hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributors::Example;

    fn set(texts: &[(&str, bool)]) -> TrainingSet {
        TrainingSet {
            base_id: "b".into(),
            repr: InputRepr::Base,
            level: KnowledgeLevel::Restricted,
            prompt_set_id: "p".into(),
            examples: texts
                .iter()
                .map(|&(t, l)| Example { text: t.into(), label: l, sources: vec![], prompt_id: t.into() })
                .collect(),
        }
    }

    fn small() -> HeadConfig {
        HeadConfig { embed: EmbedConfig { dim: 256, ngram_lo: 1, ngram_hi: 3 }, ..HeadConfig::default() }
    }

    #[test]
    fn zero_head_scores_half() {
        let h = train_binary(&set(&[("aaa", true), ("bbb", false)]), &HeadConfig { epochs: 0, ..small() }).unwrap();
        assert_eq!(h.score("anything"), 0.5);
        assert_eq!(h.score(""), 0.5);
    }

    #[test]
    fn separable_pair_is_learned() {
        let s = set(&[("aaaa", true), ("zzzz", false)]);
        let h = train_binary(&s, &HeadConfig { epochs: 50, ..small() }).unwrap();
        assert!(h.score("aaaa") > 0.5);
        assert!(h.score("zzzz") < 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let err = train_binary(&set(&[("a", true), ("b", true)]), &small()).unwrap_err();
        assert!(matches!(err, Error::SingleClass { positives: 2, negatives: 0 }));
    }

    #[test]
    fn loss_decreases_per_epoch() {
        let texts: Vec<(String, bool)> = (0..40)
            .map(|i| if i % 4 == 0 { (format!("abc {i} cab"), true) } else { (format!("xyz {i} zyx"), false) })
            .collect();
        let refs: Vec<(&str, bool)> = texts.iter().map(|(t, l)| (t.as_str(), *l)).collect();
        let h = train_binary(&set(&refs), &small()).unwrap();
        let hist = &h.meta.train.loss_history;
        assert_eq!(hist.len(), 6);
        assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{hist:?}");
        assert_eq!(h.meta.train.pos_weight, 3.0);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let s = set(&[("hello there", true), ("general kenobi", false), ("hello again", true), ("bye", false)]);
        assert_eq!(train_binary(&s, &small()).unwrap(), train_binary(&s, &small()).unwrap());
    }

    #[test]
    fn empty_pretrain_is_plain_training() {
        let s = set(&[("hello there", true), ("general kenobi", false)]);
        let empty = TrainingSet { examples: vec![], ..s.clone() };
        assert_eq!(pretrain_then_finetune(Some(&empty), &s, &small()).unwrap(), train_binary(&s, &small()).unwrap());
    }

    #[test]
    fn pretrain_stage_is_recorded() {
        let s = set(&[("hello there", true), ("general kenobi", false)]);
        let h = pretrain_then_finetune(Some(&s), &s, &small()).unwrap();
        let pre = h.meta.pretrain.as_ref().unwrap();
        assert_eq!(pre.lr, 0.1);
        assert!((h.meta.train.lr - 0.01).abs() < 1e-15);
    }
}
