use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use attrib_core::attributors::{
    attribute_classifier, attribute_exact_match, attribute_heuristic, attribute_perplexity, attribute_triplet,
    labelled_inputs, train_triplet, AttributionResult, BinaryAttributor, HeadConfig, HeuristicProfile,
    HeuristicWeights, TagVocabulary, TripletAttributor, TripletConfig,
};
use attrib_core::eval::{median, score_attribution, MetricsReport};
use attrib_core::modelhub::{ResponseCache, ResponseTable};
use attrib_core::pipeline::{attribute_p3, collect_all, train_heads, train_selectors};
use attrib_core::promptsel::{curate_p1, sample_p2, PromptSet, SelectorConfig, SelectorPolicy};
use attrib_core::simlm::{GenerationConfig, NGramModel};
use attrib_core::suite::{Suite, SuiteConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{config_error_for_io, Method, Regime, RunConfig, SuiteSpec};
use crate::error::{config, CliError, CliResult, Stage};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

pub fn load_suite(spec: &SuiteSpec) -> CliResult<Suite> {
    match &spec.path {
        Some(path) => {
            if !path.is_file() {
                return Err(config(format!("suite: manifest {} not found", path.display())));
            }
            Suite::load(path).map_err(|e| config_error_for_io("suite", e))
        }
        None => {
            Suite::bundled(&SuiteConfig { seed: spec.seed, finetune_strength: spec.strength, ..Default::default() })
                .stage("building the bundled suite")
        }
    }
}

/// Hash of the suite manifest and every corpus it names.
pub fn suite_fingerprint(suite: &Suite) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&suite.manifest).expect("manifest serializes"));
    for (id, corpus) in &suite.corpora {
        h.update(id.as_bytes());
        for d in corpus.documents() {
            h.update([0x1e]);
            h.update(d.as_bytes());
        }
        h.update([0x1d]);
    }
    format!("{:x}", h.finalize())
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).stage("hashing outputs")?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

/// Opens the response cache for this suite and generation config under
/// `dir`, if one is configured.
pub fn open_cache(
    dir: Option<&Path>,
    suite: &Suite,
    generation: &GenerationConfig,
) -> CliResult<Option<ResponseCache>> {
    let Some(dir) = dir else { return Ok(None) };
    let name =
        format!("{}-m{}-t{}.jsonl", &suite_fingerprint(suite)[..16], generation.max_tokens, generation.temperature);
    ResponseCache::open(&dir.join(name)).stage("opening the response cache").map(Some)
}

pub fn generation(cfg: &RunConfig, seed: u64) -> GenerationConfig {
    GenerationConfig { max_tokens: cfg.max_tokens, temperature: cfg.temperature, seed, ..Default::default() }
}

pub fn head_config(cfg: &RunConfig, seed: u64) -> HeadConfig {
    HeadConfig { epochs: cfg.epochs, lr: cfg.lr, seed, ..Default::default() }
}

pub fn selector_config(seed: u64) -> SelectorConfig {
    SelectorConfig { seed, ..Default::default() }
}

pub fn triplet_config(cfg: &RunConfig, seed: u64) -> TripletConfig {
    TripletConfig { epochs: cfg.epochs, seed, ..Default::default() }
}

/// Prompts and responses one seed of a run works with.
pub struct Inputs {
    pub p1: PromptSet,
    /// Prompts the attributor is trained on and the targets are queried with.
    pub main: PromptSet,
    pub table: ResponseTable,
    pub pretrain: Option<(PromptSet, ResponseTable)>,
}

pub fn gather(suite: &Suite, cfg: &RunConfig, seed: u64, cache: Option<&ResponseCache>) -> CliResult<Inputs> {
    let p1 = curate_p1(&suite.base_corpora(), &suite.tokenizer, cfg.per_corpus, seed).stage("P1 curation")?.set;
    let g = generation(cfg, seed);
    let collect = |set: &PromptSet| -> CliResult<ResponseTable> {
        let t = collect_all(suite, set, &g, cache).stage("collection")?;
        if t.is_partial() {
            return Err(CliError::Stage {
                stage: "collection",
                message: format!("{} (model, prompt) pairs failed", t.failures.len()),
            });
        }
        Ok(t)
    };
    let p2 = |n: usize| sample_p2(suite.pool(), n, seed).stage("P2 sampling");
    let (main, pretrain) = match cfg.prompts {
        Regime::P1 | Regime::P3 => (p1.clone(), None),
        Regime::P2(n) => (p2(n)?, None),
        Regime::P1P2(n) => {
            let set = p2(n)?;
            let table = collect(&set)?;
            (p1.clone(), Some((set, table)))
        }
    };
    let table = collect(&main)?;
    Ok(Inputs { p1, main, table, pretrain })
}

/// A trained attributor, as written by `train` and read by `attribute`.
pub enum Trained {
    Heads { heads: Vec<BinaryAttributor>, selectors: Option<Vec<SelectorPolicy>> },
    Triplet(TripletAttributor),
    Nothing,
}

pub fn train(suite: &Suite, cfg: &RunConfig, seed: u64, inputs: &Inputs) -> CliResult<Trained> {
    match cfg.method {
        Method::Classifier => {
            let pre = inputs.pretrain.as_ref().map(|(p, t)| (t, p));
            let heads = train_heads(
                &suite.registry,
                &inputs.table,
                &inputs.main,
                cfg.repr,
                cfg.level,
                &head_config(cfg, seed),
                pre,
            )
            .stage("head training")?;
            let selectors = if cfg.prompts == Regime::P3 {
                Some(
                    train_selectors(
                        &suite.registry,
                        &inputs.table,
                        &inputs.p1,
                        &heads,
                        cfg.level,
                        &selector_config(seed),
                        cfg.rl_episodes,
                    )
                    .stage("prompt selector training")?,
                )
            } else {
                None
            };
            Ok(Trained::Heads { heads, selectors })
        }
        Method::Triplet => {
            let pairs =
                labelled_inputs(&suite.registry, &inputs.table, &inputs.main, cfg.level).stage("triplet data")?;
            Ok(Trained::Triplet(train_triplet(&pairs, &triplet_config(cfg, seed)).stage("triplet training")?))
        }
        Method::Perplexity | Method::Exact | Method::Heuristic => Ok(Trained::Nothing),
    }
}

pub fn attribute(suite: &Suite, cfg: &RunConfig, inputs: &Inputs, trained: &Trained) -> CliResult<AttributionResult> {
    let targets = suite.finetuned_ids();
    let bases = suite.base_ids();
    let (table, prompts) = (&inputs.table, &inputs.main);
    let stage = "attribution";
    match (cfg.method, trained) {
        (Method::Classifier, Trained::Heads { heads, selectors: Some(sel) }) => {
            attribute_p3(heads, sel, table, &inputs.p1, &targets, cfg.p3_k, cfg.voting).stage(stage)
        }
        (Method::Classifier, Trained::Heads { heads, selectors: None }) => {
            if cfg.prompts == Regime::P3 {
                return Err(config("prompts: P3 needs trained prompt selectors"));
            }
            attribute_classifier(heads, table, prompts, &targets, cfg.voting).stage(stage)
        }
        (Method::Triplet, Trained::Triplet(model)) => attribute_triplet(model, table, prompts, &targets).stage(stage),
        (Method::Perplexity, _) => {
            let models: Vec<&NGramModel> = bases
                .iter()
                .map(|b| suite.registry.base_model(b).map(|m| m.as_ref()))
                .collect::<attrib_core::Result<_>>()
                .stage(stage)?;
            attribute_perplexity(&models, table, prompts, &targets).stage(stage)
        }
        (Method::Exact, _) => attribute_exact_match(table, table, &bases, &targets, prompts).stage(stage),
        (Method::Heuristic, _) => {
            let vocab = TagVocabulary::from_corpora(suite.base_corpora());
            let profile = |id: &String| HeuristicProfile::compute(id, table, prompts, &vocab);
            let b: Vec<HeuristicProfile> =
                bases.iter().map(profile).collect::<attrib_core::Result<_>>().stage(stage)?;
            let t: Vec<HeuristicProfile> =
                targets.iter().map(profile).collect::<attrib_core::Result<_>>().stage(stage)?;
            attribute_heuristic(&b, &t, &HeuristicWeights::default()).stage(stage)
        }
        (m, _) => Err(config(format!("method: trained artifacts do not match method {m:?}"))),
    }
}

/// Headline numbers of a run over all its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub level: String,
    pub repr: String,
    pub prompts: String,
    pub seeds: Vec<u64>,
    pub targets: usize,
    pub tp: Vec<usize>,
    pub median_tp: f64,
    pub mean_auc: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config: RunConfig,
    pub suite_fingerprint: String,
    /// Output path (relative to the run directory) → SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| config(format!("manifest {}: {e}", path.display())))?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| config(format!("manifest {}: {e}", path.display())))?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(config(format!("manifest: unsupported format_version {}", m.format_version)));
        }
        m.config.validate()?;
        Ok(m)
    }
}

/// Collects output files and their hashes for the run manifest.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).stage("creating the output directory")?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).stage("creating the output directory")?;
        }
        Ok(p)
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> CliResult<()> {
        let p = self.path(rel)?;
        let mut f = fs::File::create(&p).stage("writing outputs")?;
        f.write_all(contents).stage("writing outputs")?;
        self.written.push(rel.into());
        Ok(())
    }

    /// Records a file written through [`OutputDir::path`].
    pub fn record(&mut self, rel: &str) {
        self.written.push(rel.into());
    }

    pub fn finish(self, config: &RunConfig, fingerprint: String) -> CliResult<RunManifest> {
        let mut artifacts = BTreeMap::new();
        for rel in &self.written {
            artifacts.insert(rel.clone(), sha256_file(&self.root.join(rel))?);
        }
        let manifest = RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            suite_fingerprint: fingerprint,
            artifacts,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Stage { stage: "writing outputs", message: e.to_string() })?;
        fs::write(self.root.join("manifest.json"), json).stage("writing outputs")?;
        Ok(manifest)
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    serde_json::to_vec_pretty(value).map_err(|e| CliError::Stage { stage: "writing outputs", message: e.to_string() })
}

/// Writes one seed's result exports and metrics.
pub fn write_seed(
    out: &mut OutputDir,
    seed: u64,
    result: &AttributionResult,
    metrics: &MetricsReport,
) -> CliResult<()> {
    let dir = format!("seed-{seed}");
    let csv = format!("{dir}/result.csv");
    result.write_matrix_csv(&out.path(&csv)?).stage("writing outputs")?;
    out.record(&csv);
    out.write(&format!("{dir}/summary.json"), result.summary_json().stage("writing outputs")?.as_bytes())?;
    out.write(&format!("{dir}/metrics.json"), &json_bytes(metrics)?)
}

pub fn report(cfg: &RunConfig, metrics: &[MetricsReport]) -> RunReport {
    let tp: Vec<usize> = metrics.iter().map(|m| m.tp).collect();
    let tp_f: Vec<f64> = tp.iter().map(|&t| t as f64).collect();
    RunReport {
        method: metrics.first().map(|m| m.method.clone()).unwrap_or_default(),
        level: cfg.level.to_string(),
        repr: cfg.repr.to_string(),
        prompts: cfg.prompts.to_string(),
        seeds: cfg.seeds.clone(),
        targets: metrics.first().map(|m| m.targets).unwrap_or(0),
        tp,
        median_tp: median(&tp_f).unwrap_or(0.0),
        mean_auc: metrics.iter().map(|m| m.mean_auc).collect(),
    }
}

/// The whole pipeline for every seed: collect, train, attribute, score.
/// With `expected_fingerprint`, refuses a suite whose contents changed.
pub fn run(
    cfg: &RunConfig,
    out_dir: &Path,
    cache_dir: Option<&Path>,
    expected_fingerprint: Option<&str>,
) -> CliResult<(RunManifest, RunReport)> {
    cfg.validate()?;
    let suite = load_suite(&cfg.suite)?;
    let fingerprint = suite_fingerprint(&suite);
    if expected_fingerprint.is_some_and(|fp| fp != fingerprint) {
        return Err(CliError::Stage {
            stage: "loading the suite",
            message: "suite contents differ from the manifest".into(),
        });
    }
    let mut out = OutputDir::create(out_dir)?;
    let mut all = Vec::new();
    for &seed in &cfg.seeds {
        let cache = open_cache(cache_dir, &suite, &generation(cfg, seed))?;
        let inputs = gather(&suite, cfg, seed, cache.as_ref())?;
        let trained = train(&suite, cfg, seed, &inputs)?;
        let result = attribute(&suite, cfg, &inputs, &trained)?;
        let metrics = score_attribution(&result, &suite.registry, &suite.finetuned_ids()).stage("scoring")?;
        write_seed(&mut out, seed, &result, &metrics)?;
        all.push(metrics);
    }
    let rep = report(cfg, &all);
    out.write("report.json", &json_bytes(&rep)?)?;
    let manifest = out.finish(cfg, fingerprint)?;
    Ok((manifest, rep))
}
