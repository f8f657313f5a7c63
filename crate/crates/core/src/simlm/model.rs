use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{invalid, Error, Result};
use crate::features::{Tokenizer, BOS_ID, STOP_ID};
use crate::seed;

/// Temperatures below this decode greedily (argmax, lowest id on ties).
pub const GREEDY_TEMPERATURE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Base,
    Finetuned,
    Aux,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Base => "base",
            Role::Finetuned => "finetuned",
            Role::Aux => "aux",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub role: Role,
    pub base_id: Option<String>,
    pub finetune_strength: f64,
}

impl Lineage {
    pub fn base() -> Self {
        Self { role: Role::Base, base_id: None, finetune_strength: 0.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ContextCounts {
    pub total: f64,
    pub next: HashMap<u32, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub max_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
    pub stop_token: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { max_tokens: 32, temperature: 1.0, seed: 0, stop_token: STOP_ID }
    }
}

impl GenerationConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(invalid("max_tokens must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(invalid(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }
}

/// An add-k smoothed n-gram model over a shared tokenizer.
///
/// `p(t | c) = (count(c, t) + k) / (total(c) + k * V)` where `V` is the
/// number of emittable ids (every id except BOS). Contexts are the `order - 1`
/// preceding ids, left-padded with BOS.
#[derive(Debug, Clone)]
pub struct NGramModel {
    pub(crate) id: String,
    pub(crate) order: usize,
    pub(crate) smoothing_k: f64,
    pub(crate) tokenizer: Arc<Tokenizer>,
    pub(crate) counts: HashMap<Box<[u32]>, ContextCounts>,
    pub(crate) lineage: Lineage,
}

impl NGramModel {
    /// A model with no counts: every conditional is uniform.
    pub fn untrained(id: impl Into<String>, order: usize, smoothing_k: f64, tokenizer: Arc<Tokenizer>) -> Result<Self> {
        if order == 0 {
            return Err(invalid("n-gram order must be at least 1"));
        }
        if !(smoothing_k > 0.0 && smoothing_k.is_finite()) {
            return Err(invalid(format!("smoothing constant {smoothing_k} must be positive")));
        }
        Ok(Self { id: id.into(), order, smoothing_k, tokenizer, counts: HashMap::new(), lineage: Lineage::base() })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    pub fn tokenizer(&self) -> &Arc<Tokenizer> {
        &self.tokenizer
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    /// Re-labels a fine-tuned model as an auxiliary one (same lineage otherwise).
    pub fn into_aux(mut self) -> Self {
        if self.lineage.role == Role::Finetuned {
            self.lineage.role = Role::Aux;
        }
        self
    }

    pub fn contexts(&self) -> impl Iterator<Item = &[u32]> {
        self.counts.keys().map(|k| &**k)
    }

    pub fn count(&self, context: &[u32], token: u32) -> f64 {
        self.counts.get(context).and_then(|c| c.next.get(&token)).copied().unwrap_or(0.0)
    }

    pub fn context_total(&self, context: &[u32]) -> f64 {
        self.counts.get(context).map_or(0.0, |c| c.total)
    }

    /// Sum of the per-token counts stored under `context`.
    pub fn recount_total(&self, context: &[u32]) -> f64 {
        self.counts.get(context).map_or(0.0, |c| c.next.values().sum())
    }

    pub fn vocab_size(&self) -> usize {
        self.tokenizer.outcome_count()
    }

    pub fn prob(&self, context: &[u32], token: u32) -> f64 {
        if token == BOS_ID {
            return 0.0;
        }
        let k = self.smoothing_k;
        (self.count(context, token) + k) / (self.context_total(context) + k * self.vocab_size() as f64)
    }

    fn add_document(&mut self, tokens: &[u32], weight: f64) {
        let n = self.order;
        let mut padded = vec![BOS_ID; n - 1];
        padded.extend_from_slice(tokens);
        for i in 0..tokens.len() {
            let ctx = &padded[i..i + n - 1];
            let t = padded[i + n - 1];
            let entry = self.counts.entry(ctx.into()).or_default();
            *entry.next.entry(t).or_insert(0.0) += weight;
        }
    }

    /// Recomputes every context total as the id-ordered sum of its counts, so
    /// totals are reproducible bit-for-bit from the counts alone.
    pub(crate) fn refresh_totals(&mut self) {
        for cc in self.counts.values_mut() {
            cc.total = id_ordered_sum(&cc.next);
        }
    }

    fn initial_context(&self, prompt_ids: &[u32]) -> Vec<u32> {
        let n = self.order - 1;
        let mut ctx = vec![BOS_ID; n];
        ctx.extend_from_slice(prompt_ids);
        ctx.split_off(ctx.len() - n)
    }

    fn next_token(&self, context: &[u32], temperature: f64, rng: &mut impl Rng) -> u32 {
        let k = self.smoothing_k;
        let counts = self.counts.get(context);
        let weight = |t: u32| counts.and_then(|c| c.next.get(&t)).copied().unwrap_or(0.0) + k;
        if temperature < GREEDY_TEMPERATURE {
            let mut best = (0u32, f64::NEG_INFINITY);
            for t in self.tokenizer.outcomes() {
                let w = weight(t);
                if w > best.1 {
                    best = (t, w);
                }
            }
            return best.0;
        }
        let inv_t = 1.0 / temperature;
        let mut weights: Vec<(u32, f64)> = self
            .tokenizer
            .outcomes()
            .map(|t| {
                let w = weight(t);
                (t, if inv_t == 1.0 { w } else { w.powf(inv_t) })
            })
            .collect();
        if inv_t != 1.0 {
            // rescale to avoid overflow/underflow of large powers
            let max = weights.iter().map(|w| w.1).fold(0.0, f64::max);
            if max > 0.0 && max.is_finite() {
                weights.iter_mut().for_each(|w| w.1 /= max);
            }
        }
        let total: f64 = weights.iter().map(|w| w.1).sum();
        let mut u = rng.random::<f64>() * total;
        for &(t, w) in &weights {
            if u < w {
                return t;
            }
            u -= w;
        }
        weights.last().map_or(STOP_ID, |w| w.0)
    }

    /// Auto-regressive sampling. The random stream depends only on
    /// `config.seed` and the prompt, so equal models give equal responses.
    pub fn generate(&self, prompt: &str, config: &GenerationConfig) -> String {
        let mut rng = seed::derived_rng(config.seed, &format!("generate\u{1f}{prompt}"));
        let mut ctx = self.initial_context(&self.tokenizer.encode(prompt));
        let mut out = Vec::with_capacity(config.max_tokens);
        for _ in 0..config.max_tokens {
            let t = self.next_token(&ctx, config.temperature, &mut rng);
            if t == config.stop_token {
                break;
            }
            out.push(t);
            if !ctx.is_empty() {
                ctx.rotate_left(1);
                *ctx.last_mut().unwrap() = t;
            }
        }
        self.tokenizer.decode(&out)
    }

    /// Sum of natural-log probabilities and token count of `text`.
    /// The flag reports whether every scored context was unseen.
    fn log_likelihood(&self, text: &str) -> (f64, usize, bool) {
        let tokens = self.tokenizer.encode(text);
        let n = self.order - 1;
        let mut padded = vec![BOS_ID; n];
        padded.extend_from_slice(&tokens);
        let mut all_unseen = true;
        let mut sum = 0.0;
        for i in 0..tokens.len() {
            let ctx = &padded[i..i + n];
            all_unseen &= self.context_total(ctx) == 0.0;
            sum += self.prob(ctx, padded[i + n]).ln();
        }
        (sum, tokens.len(), all_unseen)
    }

    /// Token-weighted perplexity over several documents scored independently.
    pub fn corpus_perplexity<S: AsRef<str>>(&self, documents: &[S]) -> Result<f64> {
        let (mut sum, mut n, mut uniform) = (0.0, 0usize, true);
        for d in documents {
            let (s, c, u) = self.log_likelihood(d.as_ref());
            sum += s;
            n += c;
            uniform &= u;
        }
        if n == 0 {
            return Err(Error::EmptyText);
        }
        Ok(ppl_from(sum, n, uniform, self.vocab_size()))
    }
}

pub(crate) fn id_ordered_sum(next: &HashMap<u32, f64>) -> f64 {
    let mut values: Vec<(u32, f64)> = next.iter().map(|(&t, &c)| (t, c)).collect();
    values.sort_unstable_by_key(|v| v.0);
    values.iter().map(|v| v.1).sum()
}

fn ppl_from(log_sum: f64, n: usize, uniform: bool, vocab: usize) -> f64 {
    if uniform {
        // every conditional is exactly 1/V
        return vocab as f64;
    }
    (-log_sum / n as f64).exp().max(1.0)
}

/// `exp(-(1/N) Σ ln p(t_i | c_i))` over the tokens of `text`.
pub fn perplexity(model: &NGramModel, text: &str) -> Result<f64> {
    let (sum, n, uniform) = model.log_likelihood(text);
    if n == 0 {
        return Err(Error::EmptyText);
    }
    Ok(ppl_from(sum, n, uniform, model.vocab_size()))
}

/// Counts every length-`order` window of each document, left-padded with BOS.
pub fn train_ngram(
    id: impl Into<String>,
    corpus: &Corpus,
    order: usize,
    smoothing_k: f64,
    tokenizer: Arc<Tokenizer>,
) -> Result<NGramModel> {
    let mut model = NGramModel::untrained(id, order, smoothing_k, tokenizer)?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(corpus.id.clone()));
    }
    for doc in corpus.documents() {
        let tokens = model.tokenizer.encode(doc);
        model.add_document(&tokens, 1.0);
    }
    model.refresh_totals();
    Ok(model)
}

/// Adds `epochs * weight` times the corpus counts to a copy of `base`.
pub fn finetune(
    base: &NGramModel,
    id: impl Into<String>,
    corpus: &Corpus,
    weight: f64,
    epochs: u32,
) -> Result<NGramModel> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(invalid(format!("fine-tune weight {weight} must be non-negative")));
    }
    let strength = weight * epochs as f64;
    let mut model = base.clone();
    model.id = id.into();
    if strength > 0.0 {
        for doc in corpus.documents() {
            let tokens = model.tokenizer.encode(doc);
            model.add_document(&tokens, strength);
        }
        model.refresh_totals();
    }
    model.lineage = Lineage { role: Role::Finetuned, base_id: Some(base.id.clone()), finetune_strength: strength };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(texts: &[&str]) -> Arc<Tokenizer> {
        Arc::new(Tokenizer::fit(texts.iter().copied()))
    }

    fn corpus(docs: &[&str]) -> Corpus {
        Corpus::new("c", "t", docs.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn bigram_counts_by_hand() {
        let t = tok(&["ab"]);
        let m = train_ngram("m", &corpus(&["ab"]), 2, 0.1, t.clone()).unwrap();
        let (a, b) = (t.id("a").unwrap(), t.id("b").unwrap());
        assert_eq!(m.count(&[BOS_ID], a), 1.0);
        assert_eq!(m.count(&[a], b), 1.0);
        assert_eq!(m.contexts().count(), 2);
        assert_eq!(m.lineage().role, Role::Base);
    }

    #[test]
    fn repeated_document_scales_counts() {
        let t = tok(&["hello world"]);
        let one = train_ngram("a", &corpus(&["hello world"]), 3, 0.1, t.clone()).unwrap();
        let three = train_ngram("b", &corpus(&["hello world"; 3]), 3, 0.1, t).unwrap();
        for ctx in one.contexts() {
            assert_eq!(three.context_total(ctx), 3.0 * one.context_total(ctx));
            for id in one.tokenizer().outcomes() {
                assert_eq!(three.count(ctx, id), 3.0 * one.count(ctx, id));
            }
        }
    }

    #[test]
    fn disjoint_corpora_share_no_real_contexts() {
        let t = tok(&["abc", "xyz"]);
        let a = train_ngram("a", &corpus(&["abcabc"]), 3, 0.1, t.clone()).unwrap();
        let b = train_ngram("b", &corpus(&["xyzxyz"]), 3, 0.1, t).unwrap();
        let non_bos = |m: &NGramModel| -> Vec<Vec<u32>> {
            m.contexts().filter(|c| c.iter().any(|&x| x != BOS_ID)).map(<[u32]>::to_vec).collect()
        };
        let bs = non_bos(&b);
        assert!(non_bos(&a).iter().all(|c| !bs.contains(c)));
    }

    #[test]
    fn empty_corpus_rejected_with_id() {
        assert!(Corpus::new("empty-one", "t", vec![]).unwrap_err().to_string().contains("empty-one"));
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        // outcomes: unk, stop, a, b
        let m = NGramModel::untrained("u", 3, 0.1, tok(&["ab"])).unwrap();
        assert_eq!(m.vocab_size(), 4);
        assert_eq!(perplexity(&m, "abba").unwrap(), 4.0);
        assert!(matches!(perplexity(&m, ""), Err(Error::EmptyText)));
    }

    #[test]
    fn conditionals_normalize() {
        let t = tok(&["the cat sat on the mat"]);
        let m = train_ngram("m", &corpus(&["the cat sat on the mat", "a cat"]), 3, 0.1, t).unwrap();
        for ctx in m.contexts() {
            let s: f64 = m.tokenizer().outcomes().map(|id| m.prob(ctx, id)).sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!((m.context_total(ctx) - m.recount_total(ctx)).abs() < 1e-9);
        }
    }

    #[test]
    fn finetune_adds_scaled_counts_and_keeps_base() {
        let t = tok(&["abc"]);
        let base = train_ngram("base", &corpus(&["abc"]), 2, 0.1, t.clone()).unwrap();
        let ft = finetune(&base, "ft", &corpus(&["abc"]), 0.5, 2).unwrap();
        assert_eq!(ft.lineage().base_id.as_deref(), Some("base"));
        assert_eq!(ft.lineage().finetune_strength, 1.0);
        for ctx in base.contexts() {
            assert_eq!(ft.context_total(ctx), 2.0 * base.context_total(ctx));
        }
        assert_eq!(base.context_total(&[BOS_ID]), 1.0);
        assert!(finetune(&base, "x", &corpus(&["abc"]), -1.0, 1).is_err());
    }

    #[test]
    fn zero_strength_finetune_is_identity_on_distributions() {
        let t = tok(&["abc", "xyz"]);
        let base = train_ngram("base", &corpus(&["abcab"]), 3, 0.1, t).unwrap();
        for (w, e) in [(0.0, 3), (1.0, 0)] {
            let ft = finetune(&base, "ft", &corpus(&["xyzzy"]), w, e).unwrap();
            for ctx in base.contexts().chain(ft.contexts()) {
                for id in base.tokenizer().outcomes() {
                    assert_eq!(ft.prob(ctx, id), base.prob(ctx, id));
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let t = tok(&["hello world"]);
        let m = train_ngram("m", &corpus(&["hello world", "hello there"]), 3, 0.1, t).unwrap();
        let cfg = GenerationConfig { max_tokens: 12, ..GenerationConfig::with_seed(9) };
        let a = m.generate("hel", &cfg);
        assert_eq!(a, m.generate("hel", &cfg));
        assert!(a.chars().count() <= 12);
        let ft = finetune(&m, "ft", &corpus(&["zzz"]), 0.0, 1).unwrap();
        assert_eq!(ft.generate("hel", &cfg), a);
    }

    #[test]
    fn greedy_decoding_follows_unique_argmax() {
        let t = tok(&["abc"]);
        let m = train_ngram("m", &corpus(&["abcabcabca"]), 2, 0.01, t).unwrap();
        let cfg = GenerationConfig { max_tokens: 7, temperature: 1e-9, ..Default::default() };
        assert_eq!(m.generate("a", &cfg), "bcabcab");
    }

    #[test]
    fn invalid_generation_config() {
        assert!(GenerationConfig { max_tokens: 0, ..Default::default() }.validate().is_err());
        assert!(GenerationConfig { temperature: 0.0, ..Default::default() }.validate().is_err());
        assert!(GenerationConfig::default().validate().is_ok());
    }
}
