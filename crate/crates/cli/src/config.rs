use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use attrib_core::attributors::Voting;
use attrib_core::features::InputRepr;
use attrib_core::modelhub::KnowledgeLevel;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{config, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Perplexity,
    Exact,
    Classifier,
    Triplet,
    Heuristic,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "perplexity" => Ok(Method::Perplexity),
            "exact" => Ok(Method::Exact),
            "classifier" => Ok(Method::Classifier),
            "triplet" => Ok(Method::Triplet),
            "heuristic" => Ok(Method::Heuristic),
            other => Err(format!("unknown method `{other}` (perplexity, exact, classifier, triplet, heuristic)")),
        }
    }
}

/// Which prompts train the attributor and query the models under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Regime {
    /// Curated edge cases.
    P1,
    /// `n` pool prompts.
    P2(usize),
    /// Per-target prompts picked from P1 by a learned selector.
    P3,
    /// Pretrain on `n` pool prompts, then train on P1.
    P1P2(usize),
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::P1 => f.write_str("P1"),
            Regime::P2(n) => write!(f, "P2({n})"),
            Regime::P3 => f.write_str("P3"),
            Regime::P1P2(n) => write!(f, "P1+P2({n})"),
        }
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let count = |inner: &str| -> Result<usize, String> {
            let n: usize = inner.parse().map_err(|_| format!("bad prompt count in `{s}`"))?;
            if n == 0 {
                return Err(format!("prompt count in `{s}` must be positive"));
            }
            Ok(n)
        };
        let t = s.trim();
        if t == "P1" {
            Ok(Regime::P1)
        } else if t == "P3" {
            Ok(Regime::P3)
        } else if let Some(inner) = t.strip_prefix("P1+P2(").and_then(|r| r.strip_suffix(')')) {
            Ok(Regime::P1P2(count(inner)?))
        } else if let Some(inner) = t.strip_prefix("P2(").and_then(|r| r.strip_suffix(')')) {
            Ok(Regime::P2(count(inner)?))
        } else {
            Err(format!("unknown prompt regime `{s}` (P1, P2(n), P3, P1+P2(n))"))
        }
    }
}

impl TryFrom<String> for Regime {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Regime> for String {
    fn from(r: Regime) -> String {
        r.to_string()
    }
}

/// Which suite to run on: a manifest on disk or the bundled one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    /// `None` builds the bundled suite from `seed` and `strength`.
    pub path: Option<PathBuf>,
    pub seed: u64,
    pub strength: f64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self { path: None, seed: 2023, strength: 0.3 }
    }
}

/// A fully resolved experiment: everything that determines its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub suite: SuiteSpec,
    pub level: KnowledgeLevel,
    pub method: Method,
    pub repr: InputRepr,
    pub prompts: Regime,
    pub per_corpus: usize,
    pub seeds: Vec<u64>,
    pub voting: Voting,
    pub max_tokens: usize,
    pub temperature: f64,
    pub epochs: usize,
    pub lr: f64,
    pub rl_episodes: usize,
    pub p3_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            suite: SuiteSpec::default(),
            level: KnowledgeLevel::Restricted,
            method: Method::Classifier,
            repr: InputRepr::Base,
            prompts: Regime::P1,
            per_corpus: 10,
            seeds: vec![0],
            voting: Voting::Soft,
            max_tokens: 32,
            temperature: 1.0,
            epochs: 5,
            lr: 0.1,
            rl_episodes: 300,
            p3_k: 20,
        }
    }
}

impl RunConfig {
    /// Rejects combinations no stage could run, naming the offending field.
    pub fn validate(&self) -> CliResult<()> {
        if self.level == KnowledgeLevel::Restricted && self.repr != InputRepr::Base && self.method == Method::Classifier
        {
            return Err(config(format!(
                "repr: {} needs fine-tuned or auxiliary responses for training, but knowledge level K_R forbids \
                 training on any model other than the bases; use repr I_B or level K_U",
                self.repr
            )));
        }
        if matches!(self.prompts, Regime::P3 | Regime::P1P2(_)) && self.method != Method::Classifier {
            return Err(config(format!("prompts: regime {} is only defined for the classifier method", self.prompts)));
        }
        if self.seeds.is_empty() {
            return Err(config("seeds: at least one seed is required"));
        }
        if self.per_corpus == 0 {
            return Err(config("per_corpus: must be positive"));
        }
        if self.max_tokens == 0 {
            return Err(config("max_tokens: must be positive"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(config(format!("temperature: {} must be positive", self.temperature)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config(format!("lr: {} must be positive", self.lr)));
        }
        if self.p3_k == 0 || self.p3_k > attrib_core::promptsel::EPISODE_LEN {
            return Err(config(format!("p3_k: {} outside 1..={}", self.p3_k, attrib_core::promptsel::EPISODE_LEN)));
        }
        if !(self.suite.strength >= 0.0 && self.suite.strength.is_finite()) {
            return Err(config(format!("strength: {} must be non-negative", self.suite.strength)));
        }
        Ok(())
    }
}

/// Experiment flags. Every one may also be set in the config file under the
/// same name (with underscores); flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFlags {
    /// Suite manifest; the bundled suite when absent.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Seed of the bundled suite.
    #[arg(long)]
    pub suite_seed: Option<u64>,
    /// Fine-tune strength of the bundled suite.
    #[arg(long)]
    pub strength: Option<f64>,
    /// K_U or K_R.
    #[arg(long)]
    pub level: Option<String>,
    /// perplexity, exact, classifier, triplet or heuristic.
    #[arg(long)]
    pub method: Option<String>,
    /// I_B, I_F or I_BF.
    #[arg(long)]
    pub repr: Option<String>,
    /// P1, P2(n), P3 or P1+P2(n).
    #[arg(long)]
    pub prompts: Option<String>,
    #[arg(long)]
    pub per_corpus: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// soft or hard.
    #[arg(long)]
    pub voting: Option<String>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub rl_episodes: Option<usize>,
    #[arg(long)]
    pub p3_k: Option<usize>,
}

fn field<T: FromStr>(name: &str, value: Option<String>) -> CliResult<Option<T>>
where
    T::Err: fmt::Display,
{
    value.map(|v| v.parse::<T>().map_err(|e| config(format!("{name}: {e}")))).transpose()
}

impl RunFlags {
    pub fn read_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config(format!("config {}: {e}", path.display())))
    }

    /// `self` over `lower`.
    pub fn over(self, lower: RunFlags) -> RunFlags {
        RunFlags {
            suite: self.suite.or(lower.suite),
            suite_seed: self.suite_seed.or(lower.suite_seed),
            strength: self.strength.or(lower.strength),
            level: self.level.or(lower.level),
            method: self.method.or(lower.method),
            repr: self.repr.or(lower.repr),
            prompts: self.prompts.or(lower.prompts),
            per_corpus: self.per_corpus.or(lower.per_corpus),
            seeds: self.seeds.or(lower.seeds),
            voting: self.voting.or(lower.voting),
            max_tokens: self.max_tokens.or(lower.max_tokens),
            temperature: self.temperature.or(lower.temperature),
            epochs: self.epochs.or(lower.epochs),
            lr: self.lr.or(lower.lr),
            rl_episodes: self.rl_episodes.or(lower.rl_episodes),
            p3_k: self.p3_k.or(lower.p3_k),
        }
    }

    /// Fills unset fields from `base` and validates the result.
    pub fn resolve(self, base: RunConfig) -> CliResult<RunConfig> {
        let voting = match self.voting.as_deref() {
            None => None,
            Some("soft") => Some(Voting::Soft),
            Some("hard") => Some(Voting::Hard),
            Some(other) => return Err(config(format!("voting: unknown voting `{other}` (soft, hard)"))),
        };
        let cfg = RunConfig {
            suite: SuiteSpec {
                path: self.suite.or(base.suite.path),
                seed: self.suite_seed.unwrap_or(base.suite.seed),
                strength: self.strength.unwrap_or(base.suite.strength),
            },
            level: field("level", self.level)?.unwrap_or(base.level),
            method: field("method", self.method)?.unwrap_or(base.method),
            repr: field("repr", self.repr)?.unwrap_or(base.repr),
            prompts: field("prompts", self.prompts)?.unwrap_or(base.prompts),
            per_corpus: self.per_corpus.unwrap_or(base.per_corpus),
            seeds: self.seeds.unwrap_or(base.seeds),
            voting: voting.unwrap_or(base.voting),
            max_tokens: self.max_tokens.unwrap_or(base.max_tokens),
            temperature: self.temperature.unwrap_or(base.temperature),
            epochs: self.epochs.unwrap_or(base.epochs),
            lr: self.lr.unwrap_or(base.lr),
            rl_episodes: self.rl_episodes.unwrap_or(base.rl_episodes),
            p3_k: self.p3_k.unwrap_or(base.p3_k),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Missing referenced files are configuration errors; anything else is a
/// failure of the named stage.
pub(crate) fn config_error_for_io(field: &str, e: attrib_core::Error) -> crate::error::CliError {
    match e {
        attrib_core::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => config(format!("{field}: {io}")),
        attrib_core::Error::Format { .. } => config(format!("{field}: {e}")),
        other => crate::error::CliError::Pipeline { stage: "loading the suite", source: other },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_round_trip() {
        for r in [Regime::P1, Regime::P2(200), Regime::P3, Regime::P1P2(50)] {
            assert_eq!(r.to_string().parse::<Regime>().unwrap(), r);
        }
        assert!("P2(0)".parse::<Regime>().is_err());
        assert!("P4".parse::<Regime>().is_err());
    }

    #[test]
    fn flags_override_file() {
        let file: RunFlags = toml::from_str("method = \"exact\"\nseeds = [1, 2]\nlevel = \"K_U\"").unwrap();
        let flags = RunFlags { method: Some("perplexity".into()), ..Default::default() };
        let cfg = flags.over(file).resolve(RunConfig::default()).unwrap();
        assert_eq!(cfg.method, Method::Perplexity);
        assert_eq!(cfg.seeds, [1, 2]);
        assert_eq!(cfg.level, KnowledgeLevel::Universal);
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        assert!(toml::from_str::<RunFlags>("methd = \"exact\"").is_err());
    }

    #[test]
    fn restricted_level_forbids_finetuned_inputs() {
        let flags = RunFlags { repr: Some("I_F".into()), ..Default::default() };
        let err = flags.resolve(RunConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("K_R"), "{err}");
    }

    #[test]
    fn config_serializes_stably() {
        let c = RunConfig::default();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
        assert!(json.contains("\"prompts\":\"P1\""));
    }
}
