use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Prompt, PromptSet, SourceTag};
use crate::attributors::{BinaryAttributor, DECISION_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::features::{embed, prediction_input, FeatureVector, InputRepr};
use crate::modelhub::ResponseTable;
use crate::seed;

pub const EPISODE_LEN: usize = 20;
pub const REWARD_CORRECT: f64 = 1.0;
pub const REWARD_INCORRECT: f64 = -10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorConfig {
    pub episode_len: usize,
    pub reward_correct: f64,
    pub reward_incorrect: f64,
    /// Must be set for rewards other than +1 / −10.
    pub override_rewards: bool,
    pub clip_eps: f64,
    pub lr: f64,
    pub discount: f64,
    /// Gradient steps per collected episode.
    pub update_epochs: usize,
    /// Weight of the old value in the moving-average reward baseline.
    pub baseline_decay: f64,
    /// Width of the hashed embedding of the previous response in the state.
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            episode_len: EPISODE_LEN,
            reward_correct: REWARD_CORRECT,
            reward_incorrect: REWARD_INCORRECT,
            override_rewards: false,
            clip_eps: 0.2,
            lr: 0.005,
            discount: 1.0,
            update_epochs: 4,
            baseline_decay: 0.9,
            embed_dim: 256,
            seed: 0,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_len != EPISODE_LEN {
            return Err(invalid(format!("episode_len is fixed at {EPISODE_LEN}, got {}", self.episode_len)));
        }
        if !self.override_rewards
            && (self.reward_correct != REWARD_CORRECT || self.reward_incorrect != REWARD_INCORRECT)
        {
            return Err(invalid("rewards other than +1 / -10 require override_rewards"));
        }
        if !(self.reward_correct.is_finite() && self.reward_incorrect.is_finite()) {
            return Err(invalid("rewards must be finite"));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(invalid(format!("clip_eps {} outside (0, 1)", self.clip_eps)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(invalid(format!("discount {} outside [0, 1]", self.discount)));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(invalid(format!("baseline_decay {} outside [0, 1)", self.baseline_decay)));
        }
        if !self.embed_dim.is_power_of_two() {
            return Err(invalid(format!("embed_dim {} is not a power of two", self.embed_dim)));
        }
        Ok(())
    }
}

/// What the agent sees after querying a target with a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub response: String,
    /// Head score of the response.
    pub score: f64,
}

/// A prompt-selection environment: a fixed action set (the P1 prompts) and
/// targets whose responses a head scores.
pub trait SelectionEnv {
    fn actions(&self) -> usize;
    /// Training targets, in one-hot order.
    fn targets(&self) -> Vec<String>;
    /// Whether `target` should be flagged by the head; `None` when unknown.
    fn label(&self, target: &str) -> Option<bool>;
    fn observe(&self, target: &str, action: usize) -> Result<Observation>;
}

pub const SELECTOR_FORMAT_VERSION: u32 = 1;

/// Linear softmax policy over P1 prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorPolicy {
    pub config: SelectorConfig,
    pub prompt_set_id: String,
    /// Action order.
    pub prompt_ids: Vec<String>,
    /// One-hot order of the training targets.
    pub targets: Vec<String>,
    /// `actions × state_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Mean per-step reward of each training episode.
    pub curve: Vec<f64>,
}

impl SelectorPolicy {
    pub fn new(config: SelectorConfig, prompts: &PromptSet, targets: Vec<String>) -> Result<Self> {
        config.validate()?;
        let n = prompts.len();
        let dim = targets.len() + config.embed_dim + 1;
        Ok(Self {
            config,
            prompt_set_id: prompts.id.clone(),
            prompt_ids: prompts.ids().map(str::to_string).collect(),
            targets,
            weights: vec![0.0; n * dim],
            bias: vec![0.0; n],
            curve: Vec::new(),
        })
    }

    pub fn actions(&self) -> usize {
        self.prompt_ids.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Stored {
            format_version: SELECTOR_FORMAT_VERSION,
            kind: "selector".into(),
            policy: self.clone(),
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let s: Stored = serde_json::from_str(json)?;
        if s.format_version != SELECTOR_FORMAT_VERSION || s.kind != "selector" {
            return Err(invalid(format!("not a version {SELECTOR_FORMAT_VERSION} selector file")));
        }
        let p = s.policy;
        p.config.validate()?;
        if p.weights.len() != p.actions() * p.state_dim() || p.bias.len() != p.actions() {
            return Err(invalid("selector weights do not match its prompt and target lists"));
        }
        Ok(p)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn state_dim(&self) -> usize {
        self.targets.len() + self.config.embed_dim + 1
    }

    /// Start-of-episode state: target one-hot (all zero for a target not seen
    /// in training), no previous response, previous score 0.
    pub fn initial_state(&self, target: &str) -> Vec<f64> {
        let mut s = vec![0.0; self.state_dim()];
        if let Some(i) = self.targets.iter().position(|t| t == target) {
            s[i] = 1.0;
        }
        s
    }

    fn next_state(&self, target: &str, obs: &Observation) -> Vec<f64> {
        let mut s = self.initial_state(target);
        let off = self.targets.len();
        let e: FeatureVector = embed(&obs.response, self.config.embed_dim, 1, 3);
        for &(i, v) in e.entries() {
            s[off + i as usize] = v;
        }
        s[off + self.config.embed_dim] = obs.score;
        s
    }

    pub fn logits(&self, state: &[f64]) -> Vec<f64> {
        let d = self.state_dim();
        (0..self.actions())
            .map(|a| self.bias[a] + self.weights[a * d..][..d].iter().zip(state).map(|(w, s)| w * s).sum::<f64>())
            .collect()
    }

    pub fn probabilities(&self, state: &[f64]) -> Vec<f64> {
        softmax(&self.logits(state))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stored {
    format_version: u32,
    kind: String,
    policy: SelectorPolicy,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

struct Step {
    state: Vec<f64>,
    action: usize,
    old_prob: f64,
    reward: f64,
}

/// Trains a policy by clipped-surrogate policy gradient.
///
/// Each episode draws a training target uniformly and takes `episode_len`
/// actions. A step earns `reward_correct` when the head's 0.5-threshold
/// decision on the response matches the target's label and
/// `reward_incorrect` otherwise. The advantage of step `t` is the return
/// from `t` minus a moving-average per-step baseline times the number of
/// remaining (discounted) steps.
pub fn rl_train(
    config: &SelectorConfig,
    p1: &PromptSet,
    env: &dyn SelectionEnv,
    episodes: usize,
) -> Result<SelectorPolicy> {
    let targets = env.targets();
    if targets.is_empty() {
        return Err(invalid("selection environment has no training targets"));
    }
    if env.actions() != p1.len() {
        return Err(invalid(format!("environment has {} actions for {} prompts", env.actions(), p1.len())));
    }
    let labels: Vec<bool> = targets
        .iter()
        .map(|t| env.label(t).ok_or_else(|| invalid(format!("training target `{t}` has no label"))))
        .collect::<Result<_>>()?;
    let mut policy = SelectorPolicy::new(*config, p1, targets)?;
    let mut rng = seed::derived_rng(config.seed, "rl/train");
    let mut baseline: Option<f64> = None;
    let d = policy.state_dim();
    let n = policy.actions();
    let len = config.episode_len;

    for episode in 0..episodes {
        let ti = rng.random_range(0..policy.targets.len());
        let target = policy.targets[ti].clone();
        let mut state = policy.initial_state(&target);
        let mut steps = Vec::with_capacity(len);
        for _ in 0..len {
            let probs = policy.probabilities(&state);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let action = probs.iter().position(|p| {
                acc += p;
                u < acc
            });
            let action = action.unwrap_or(n - 1);
            let obs = env.observe(&target, action)?;
            let correct = (obs.score >= DECISION_THRESHOLD) == labels[ti];
            let reward = if correct { config.reward_correct } else { config.reward_incorrect };
            steps.push(Step { state, action, old_prob: probs[action], reward });
            state = policy.next_state(&target, &obs);
        }
        let mean_reward = steps.iter().map(|s| s.reward).sum::<f64>() / len as f64;
        let b = baseline.unwrap_or(mean_reward);

        let mut advantages = vec![0.0; len];
        let (mut ret, mut remaining) = (0.0, 0.0);
        for t in (0..len).rev() {
            ret = steps[t].reward + config.discount * ret;
            remaining = 1.0 + config.discount * remaining;
            advantages[t] = ret - b * remaining;
        }

        for _ in 0..config.update_epochs {
            let mut gw = vec![0.0; n * d];
            let mut gb = vec![0.0; n];
            let mut surrogate = 0.0;
            for (s, &adv) in steps.iter().zip(&advantages) {
                let probs = policy.probabilities(&s.state);
                let ratio = probs[s.action] / s.old_prob;
                let clipped = ratio.clamp(1.0 - config.clip_eps, 1.0 + config.clip_eps);
                surrogate += (ratio * adv).min(clipped * adv);
                // The clipped branch is flat; only the unclipped one has gradient.
                if ratio * adv > clipped * adv {
                    continue;
                }
                for a in 0..n {
                    let g = adv * ratio * (f64::from(u8::from(a == s.action)) - probs[a]);
                    if g == 0.0 {
                        continue;
                    }
                    gb[a] += g;
                    for (w, x) in gw[a * d..][..d].iter_mut().zip(&s.state) {
                        *w += g * x;
                    }
                }
            }
            if !surrogate.is_finite() {
                return Err(Error::NonFiniteLoss { episode, lr: config.lr });
            }
            let scale = config.lr / len as f64;
            policy.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w += scale * g);
            policy.bias.iter_mut().zip(&gb).for_each(|(w, g)| *w += scale * g);
        }
        if policy.weights.iter().chain(&policy.bias).any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteLoss { episode, lr: config.lr });
        }
        policy.curve.push(mean_reward);
        baseline = Some(config.baseline_decay * b + (1.0 - config.baseline_decay) * mean_reward);
    }
    Ok(policy)
}

/// Rolls one greedy episode of `k` steps against `target`, never choosing a
/// prompt twice, and returns the chosen prompts in order. Equal logits are
/// broken by a seeded draw.
pub fn rl_select(
    policy: &SelectorPolicy,
    p1: &PromptSet,
    env: &dyn SelectionEnv,
    target: &str,
    k: usize,
) -> Result<PromptSet> {
    if k > policy.config.episode_len {
        return Err(invalid(format!("k = {k} exceeds the episode length {}", policy.config.episode_len)));
    }
    if k == 0 {
        return Err(invalid("k must be positive"));
    }
    if p1.ids().ne(policy.prompt_ids.iter().map(String::as_str)) {
        return Err(invalid(format!("policy was trained on prompt set `{}`", policy.prompt_set_id)));
    }
    let mut rng = seed::derived_rng(policy.config.seed, &format!("rl/select/{target}"));
    let mut taken = vec![false; policy.actions()];
    let mut chosen = Vec::new();
    let mut state = policy.initial_state(target);
    for _ in 0..k.min(policy.actions()) {
        let logits = policy.logits(&state);
        let best = logits.iter().zip(&taken).filter(|(_, t)| !**t).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..logits.len()).filter(|&a| !taken[a] && logits[a] == best).collect();
        let action = ties[rng.random_range(0..ties.len())];
        taken[action] = true;
        chosen.push(action);
        let obs = env.observe(target, action)?;
        state = policy.next_state(target, &obs);
    }
    let prompts = chosen
        .into_iter()
        .map(|a| {
            let p = &p1.prompts()[a];
            Prompt { source_tag: SourceTag::P3, ..p.clone() }
        })
        .collect();
    PromptSet::new(format!("p3-{target}"), Some(policy.config.seed), prompts)
}

/// One good prompt among `actions`: the head is right on it for every target
/// and wrong on every other prompt.
pub struct BanditEnv {
    pub actions: usize,
    pub good: usize,
    pub targets: usize,
}

impl SelectionEnv for BanditEnv {
    fn actions(&self) -> usize {
        self.actions
    }

    fn targets(&self) -> Vec<String> {
        (0..self.targets).map(|i| format!("t{i}")).collect()
    }

    fn label(&self, _target: &str) -> Option<bool> {
        Some(true)
    }

    fn observe(&self, _target: &str, action: usize) -> Result<Observation> {
        let score = if action == self.good { 1.0 } else { 0.0 };
        Ok(Observation { response: format!("r{action}"), score })
    }
}

/// Environment over collected responses and one trained head.
pub struct TableEnv<'a> {
    head: &'a BinaryAttributor,
    table: &'a ResponseTable,
    prompts: &'a PromptSet,
    labelled: Vec<(String, bool)>,
    memo: Mutex<HashMap<(String, usize), Observation>>,
}

impl<'a> TableEnv<'a> {
    /// `labelled` are the training targets with the head's expected decision.
    pub fn new(
        head: &'a BinaryAttributor,
        table: &'a ResponseTable,
        prompts: &'a PromptSet,
        labelled: Vec<(String, bool)>,
    ) -> Result<Self> {
        table.check_coverage(labelled.iter().map(|(t, _)| t.as_str()), prompts)?;
        if head.repr() == InputRepr::BaseAndFinetuned {
            table.check_coverage([head.base_id.as_str()], prompts)?;
        }
        Ok(Self { head, table, prompts, labelled, memo: Mutex::new(HashMap::new()) })
    }
}

impl SelectionEnv for TableEnv<'_> {
    fn actions(&self) -> usize {
        self.prompts.len()
    }

    fn targets(&self) -> Vec<String> {
        self.labelled.iter().map(|(t, _)| t.clone()).collect()
    }

    fn label(&self, target: &str) -> Option<bool> {
        self.labelled.iter().find(|(t, _)| t == target).map(|(_, l)| *l)
    }

    fn observe(&self, target: &str, action: usize) -> Result<Observation> {
        let key = (target.to_string(), action);
        if let Some(o) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(o.clone());
        }
        let p = self.prompts.prompts().get(action).ok_or_else(|| invalid(format!("action {action} out of range")))?;
        let response = self.table.response(target, &p.prompt_id)?;
        let own = match self.head.repr() {
            InputRepr::BaseAndFinetuned => Some(self.table.response(&self.head.base_id, &p.prompt_id)?),
            _ => None,
        };
        let score = self.head.score(&prediction_input(self.head.repr(), &p.text, own, response)?);
        let obs = Observation { response: response.to_string(), score };
        self.memo.lock().expect("memo lock").insert(key, obs.clone());
        Ok(obs)
    }
}

/// Fraction of correct head decisions over `prompts` for labelled targets.
pub fn head_accuracy(env: &dyn SelectionEnv, prompts: &[usize], labelled: &BTreeMap<String, bool>) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (t, &label) in labelled {
        for &a in prompts {
            let obs = env.observe(t, a)?;
            correct += usize::from((obs.score >= DECISION_THRESHOLD) == label);
            total += 1;
        }
    }
    if total == 0 {
        return Err(invalid("no (target, prompt) pairs to score"));
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompts(n: usize) -> PromptSet {
        let ps = (0..n)
            .map(|i| Prompt {
                prompt_id: format!("p{i}"),
                text: format!("prompt {i}"),
                source_tag: SourceTag::P1,
                origin: "x".into(),
            })
            .collect();
        PromptSet::new("p1", Some(0), ps).unwrap()
    }

    #[test]
    fn config_contract() {
        assert!(SelectorConfig::default().validate().is_ok());
        assert!(SelectorConfig { episode_len: 10, ..Default::default() }.validate().is_err());
        assert!(SelectorConfig { reward_incorrect: -1.0, ..Default::default() }.validate().is_err());
        assert!(SelectorConfig { reward_incorrect: -1.0, override_rewards: true, ..Default::default() }
            .validate()
            .is_ok());
    }

    #[test]
    fn zero_episodes_keep_initialization() {
        let env = BanditEnv { actions: 5, good: 2, targets: 2 };
        let p = rl_train(&SelectorConfig::default(), &prompts(5), &env, 0).unwrap();
        assert_eq!(p, SelectorPolicy::new(SelectorConfig::default(), &prompts(5), env.targets()).unwrap());
    }

    #[test]
    fn bandit_good_prompt_is_learned() {
        let env = BanditEnv { actions: 10, good: 7, targets: 3 };
        let p = rl_train(&SelectorConfig::default(), &prompts(10), &env, 300).unwrap();
        let probs = p.probabilities(&p.initial_state("t0"));
        assert!(probs[7] >= 3.0 * 0.1, "{probs:?}");
        let first: f64 = p.curve[..50].iter().sum::<f64>() / 50.0;
        let last: f64 = p.curve[250..].iter().sum::<f64>() / 50.0;
        assert!(last > first);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let env = BanditEnv { actions: 6, good: 1, targets: 2 };
        let p = rl_train(&SelectorConfig::default(), &prompts(6), &env, 20).unwrap();
        let back = SelectorPolicy::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(SelectorPolicy::from_json(&p.to_json().unwrap().replace("\"selector\"", "\"binary\"")).is_err());
    }

    #[test]
    fn select_is_a_deterministic_subset() {
        let env = BanditEnv { actions: 30, good: 4, targets: 1 };
        let p1 = prompts(30);
        let untrained = SelectorPolicy::new(SelectorConfig::default(), &p1, env.targets()).unwrap();
        let a = rl_select(&untrained, &p1, &env, "t0", 20).unwrap();
        assert_eq!(a, rl_select(&untrained, &p1, &env, "t0", 20).unwrap());
        assert_eq!(a.len(), 20);
        assert!(a.prompts().iter().all(|p| p1.get(&p.prompt_id).is_some() && p.source_tag == SourceTag::P3));
        assert!(rl_select(&untrained, &p1, &env, "t0", 21).is_err());
    }
}
