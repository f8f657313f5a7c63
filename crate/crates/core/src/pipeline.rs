//! Glue shared by the command line, the sweeps and the tests: collect a
//! suite's responses, train heads, attribute.

use rayon::prelude::*;

use crate::attributors::{
    make_training_set, pretrain_then_finetune, vote, AttributionResult, BinaryAttributor, HeadConfig, PromptScore,
    Voting,
};
use crate::error::{invalid, Result};
use crate::features::{prediction_input, InputRepr};
use crate::modelhub::{collect_responses, KnowledgeLevel, ModelRegistry, ResponseCache, ResponseTable};
use crate::promptsel::{rl_select, rl_train, PromptSet, SelectorConfig, SelectorPolicy, TableEnv};
use crate::seed;
use crate::simlm::GenerationConfig;
use crate::suite::Suite;

/// Every model in the suite: bases, fine-tuned, auxiliary.
pub fn all_models(suite: &Suite) -> Vec<String> {
    let mut ids = suite.base_ids();
    ids.extend(suite.finetuned_ids());
    ids.extend(suite.aux_ids());
    ids
}

pub fn collect_all(
    suite: &Suite,
    prompts: &PromptSet,
    config: &GenerationConfig,
    cache: Option<&ResponseCache>,
) -> Result<ResponseTable> {
    collect_responses(&suite.registry, &all_models(suite), prompts, config, cache)
}

/// Seed of the head for `base` under a top-level head seed.
pub fn head_seed(seed: u64, base: &str) -> u64 {
    seed::derive(seed, &format!("head/{base}"))
}

/// One head per base, trained concurrently. With `pretrain`, each head is
/// first trained on those responses, then on `prompts`.
pub fn train_heads(
    registry: &ModelRegistry,
    table: &ResponseTable,
    prompts: &PromptSet,
    repr: InputRepr,
    level: KnowledgeLevel,
    cfg: &HeadConfig,
    pretrain: Option<(&ResponseTable, &PromptSet)>,
) -> Result<Vec<BinaryAttributor>> {
    let bases = registry.training_view(level).bases();
    bases
        .par_iter()
        .map(|b| {
            let set = make_training_set(b, registry, table, prompts, repr, level)?;
            let pre = match pretrain {
                Some((t, p)) => Some(make_training_set(b, registry, t, p, repr, level)?),
                None => None,
            };
            let head_cfg = HeadConfig { seed: head_seed(cfg.seed, b), ..*cfg };
            pretrain_then_finetune(pre.as_ref(), &set, &head_cfg)
        })
        .collect()
}

/// Models a selector for `base`'s head may train against, labelled with
/// whether the head should flag them: the bases, plus the auxiliary set at
/// `K_U`.
pub fn selector_targets(registry: &ModelRegistry, level: KnowledgeLevel, base: &str) -> Result<Vec<(String, bool)>> {
    let view = registry.training_view(level);
    let mut out: Vec<(String, bool)> = view.bases().into_iter().map(|b| (b.clone(), b == base)).collect();
    if level == KnowledgeLevel::Universal {
        out.extend(view.aux_models()?.into_iter().map(|(a, b)| (a, b == base)));
    }
    Ok(out)
}

/// One prompt selector per head, trained on P1 responses.
pub fn train_selectors(
    registry: &ModelRegistry,
    table: &ResponseTable,
    p1: &PromptSet,
    heads: &[BinaryAttributor],
    level: KnowledgeLevel,
    cfg: &SelectorConfig,
    episodes: usize,
) -> Result<Vec<SelectorPolicy>> {
    heads
        .par_iter()
        .map(|h| {
            let env = TableEnv::new(h, table, p1, selector_targets(registry, level, &h.base_id)?)?;
            let c = SelectorConfig { seed: seed::derive(cfg.seed, &format!("selector/{}", h.base_id)), ..*cfg };
            rl_train(&c, p1, &env, episodes)
        })
        .collect()
}

/// Classifier attribution where each head scores each target on the `k`
/// prompts its own selector picks for that target.
pub fn attribute_p3(
    heads: &[BinaryAttributor],
    policies: &[SelectorPolicy],
    table: &ResponseTable,
    p1: &PromptSet,
    targets: &[String],
    k: usize,
    voting: Voting,
) -> Result<AttributionResult> {
    if heads.len() != policies.len() {
        return Err(invalid(format!("{} heads but {} selectors", heads.len(), policies.len())));
    }
    let mut scores = Vec::new();
    for (h, policy) in heads.iter().zip(policies) {
        let env = TableEnv::new(h, table, p1, Vec::new())?;
        for t in targets {
            let p3 = rl_select(policy, p1, &env, t, k)?;
            for p in p3.prompts() {
                let own = match h.repr() {
                    InputRepr::BaseAndFinetuned => Some(table.response(&h.base_id, &p.prompt_id)?),
                    _ => None,
                };
                let input = prediction_input(h.repr(), &p.text, own, table.response(t, &p.prompt_id)?)?;
                scores.push(PromptScore {
                    target: t.clone(),
                    base: h.base_id.clone(),
                    prompt_id: p.prompt_id.clone(),
                    score: h.score(&input),
                });
            }
        }
    }
    let method = match voting {
        Voting::Soft => "classifier-p3",
        Voting::Hard => "classifier-p3-hard",
    };
    vote(method, heads.iter().map(|h| h.base_id.clone()).collect(), scores, voting)
}
