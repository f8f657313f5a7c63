//! The `attrib` command line: builds suites, collects responses, serves
//! models, trains attributors, runs attribution and sweeps.

mod config;
mod error;
mod run;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use attrib_core::attributors::{BinaryAttributor, TripletAttributor};
use attrib_core::eval::{
    default_ood_family, score_attribution, sweep_finetune, sweep_pretrain_size, sweep_prompt_count, AblationGrid,
    FinetuneAxis, SweepSettings,
};
use attrib_core::modelhub::{collect_responses, ModelRegistry, ResponseCache};
use attrib_core::promptsel::{curate_p1, sample_p2, PromptSet, SelectorPolicy};
use attrib_core::simlm::GenerationConfig;
use attrib_core::suite::{Suite, SuiteConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

pub use config::{Method, Regime, RunConfig, RunFlags, SuiteSpec};
pub use error::{CliError, CliResult};
pub use run::{run, suite_fingerprint, RunManifest, RunReport, MANIFEST_FORMAT_VERSION};

use error::{config, Stage};
use run::{attribute, gather, json_bytes, load_suite, open_cache, train, write_seed, OutputDir, Trained};

#[derive(Parser)]
#[command(name = "attrib", version, about = "Attribute fine-tuned text generators to their base models")]
struct Cli {
    /// Print a machine-readable summary on standard output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled suite (manifest and corpora) to a directory.
    BuildSuite(BuildSuiteArgs),
    /// Query models with a prompt set, through the response cache.
    Collect(CollectArgs),
    /// Serve a suite's models over HTTP.
    Serve(ServeArgs),
    /// Train attributors and save them.
    Train(TrainArgs),
    /// Attribute with saved attributors.
    Attribute(AttributeArgs),
    /// Run an ablation sweep.
    Sweep(SweepArgs),
    /// Summarize a run or sweep directory.
    Report(ReportArgs),
    /// Collect, train, attribute and score in one go.
    Run(RunArgs),
}

#[derive(Args)]
struct SuiteArgs {
    /// Suite manifest; the bundled suite when absent.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, default_value_t = 2023)]
    suite_seed: u64,
    #[arg(long, default_value_t = 0.3)]
    strength: f64,
}

impl SuiteArgs {
    fn spec(&self) -> SuiteSpec {
        SuiteSpec { path: self.suite.clone(), seed: self.suite_seed, strength: self.strength }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML file supplying any experiment flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunFlags,
    /// Directory for response caches.
    #[arg(long, env = "ATTRIB_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self, base: RunConfig) -> CliResult<RunConfig> {
        let file = match &self.config {
            Some(p) => RunFlags::read_file(p)?,
            None => RunFlags::default(),
        };
        self.flags.clone().over(file).resolve(base)
    }
}

#[derive(Args)]
struct BuildSuiteArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2023)]
    seed: u64,
    #[arg(long, default_value_t = 0.3)]
    strength: f64,
}

#[derive(Args)]
struct CollectArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Comma-separated model ids; every model when absent.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// P1, P2(n) or a prompt file (JSON Lines).
    #[arg(long, default_value = "P1")]
    prompts: String,
    #[arg(long, default_value_t = 10)]
    per_corpus: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    max_tokens: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Response cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, env = "ATTRIB_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Query a running `serve` endpoint instead of the local models.
    #[arg(long)]
    endpoint: Option<String>,
    /// Write the collected records here (JSON Lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttributeArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Directory written by `train`.
    #[arg(long)]
    trained: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepAxis {
    PromptCount,
    PretrainSize,
    Strength,
    DataFraction,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    #[arg(long, value_enum)]
    axis: SweepAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Fine-tune axes: `base` or `base:ood-family`, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "base-lyrics,base-code")]
    tested: Vec<String>,
    /// Data fraction held fixed on the strength axis.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    /// Strength held fixed on the data-fraction axis.
    #[arg(long, default_value_t = 2.0)]
    at_strength: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of `run`, `attribute` or `sweep`.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Re-run the configuration recorded in a run manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return u8::try_from(e.exit_code()).unwrap_or(2);
        }
    };
    match dispatch(cli.command, cli.json) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Writes the summary to stdout; a closed pipe is not an error.
fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    use std::io::Write;
    let line = if json { serde_json::to_string(value).expect("summary serializes") } else { text() };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}").and_then(|_| out.flush());
}

fn dispatch(command: Command, json: bool) -> CliResult<()> {
    match command {
        Command::BuildSuite(a) => build_suite(a, json),
        Command::Collect(a) => collect(a, json),
        Command::Serve(a) => serve(a, json),
        Command::Train(a) => train_cmd(a, json),
        Command::Attribute(a) => attribute_cmd(a, json),
        Command::Sweep(a) => sweep(a, json),
        Command::Report(a) => report(a, json),
        Command::Run(a) => run_cmd(a, json),
    }
}

fn build_suite(a: BuildSuiteArgs, json: bool) -> CliResult<()> {
    let suite = Suite::bundled(&SuiteConfig { seed: a.seed, finetune_strength: a.strength, ..Default::default() })
        .stage("building the suite")?;
    let path = suite.write(&a.out).stage("writing the suite")?;
    let summary = json!({ "manifest": path, "models": suite.registry.len(), "fingerprint": suite_fingerprint(&suite) });
    emit(json, &summary, || format!("wrote {} ({} models)", path.display(), suite.registry.len()));
    Ok(())
}

fn prompt_set(spec: &str, suite: &Suite, per_corpus: usize, seed: u64) -> CliResult<PromptSet> {
    if let Ok(regime) = spec.parse::<Regime>() {
        return match regime {
            Regime::P1 => {
                Ok(curate_p1(&suite.base_corpora(), &suite.tokenizer, per_corpus, seed).stage("P1 curation")?.set)
            }
            Regime::P2(n) => sample_p2(suite.pool(), n, seed).stage("P2 sampling"),
            other => Err(config(format!("prompts: {other} cannot be collected directly"))),
        };
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(config(format!("prompts: `{spec}` is neither a regime nor a prompt file")));
    }
    PromptSet::read_jsonl(path).map_err(|e| config(format!("prompts: {e}")))
}

fn collect(a: CollectArgs, json: bool) -> CliResult<()> {
    let suite = load_suite(&a.suite.spec())?;
    let prompts = prompt_set(&a.prompts, &suite, a.per_corpus, a.seed)?;
    let g =
        GenerationConfig { max_tokens: a.max_tokens, temperature: a.temperature, seed: a.seed, ..Default::default() };
    g.validate().map_err(|e| config(e.to_string()))?;
    let remote;
    let registry: &ModelRegistry = match &a.endpoint {
        Some(ep) => {
            remote = attrib_hub::remote_registry(ep).stage("connecting to the endpoint")?;
            &remote
        }
        None => &suite.registry,
    };
    let models = a.models.clone().unwrap_or_else(|| registry.list().into_iter().map(|m| m.model_id).collect());
    if let Some(m) = models.iter().find(|m| !registry.contains(m)) {
        return Err(config(format!("models: unknown model `{m}`")));
    }
    let cache = match &a.cache {
        Some(p) => Some(ResponseCache::open(p).stage("opening the response cache")?),
        None => open_cache(a.cache_dir.as_deref(), &suite, &g)?,
    };
    let table = collect_responses(registry, &models, &prompts, &g, cache.as_ref()).stage("collection")?;
    if let Some(out) = &a.out {
        let mut text = String::new();
        for r in table.records() {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        fs::write(out, text).stage("writing records")?;
    }
    let summary = json!({
        "prompt_set": prompts.id,
        "records": table.len(),
        "invocations": table.invocations(),
        "failures": table.failures.len(),
        "cache": cache.as_ref().map(|c| c.path().to_path_buf()),
    });
    emit(json, &summary, || {
        format!("{} records, {} fresh generations, {} failures", table.len(), table.invocations(), table.failures.len())
    });
    if table.is_partial() {
        return Err(CliError::Stage { stage: "collection", message: format!("{} pairs failed", table.failures.len()) });
    }
    Ok(())
}

fn serve(a: ServeArgs, json: bool) -> CliResult<()> {
    let suite = load_suite(&a.suite.spec())?;
    let registry = Arc::new(suite.registry);
    let server = attrib_hub::serve(registry, &a.bind).map_err(|e| match e {
        attrib_core::Error::Io(io) => config(format!("bind: {io}")),
        other => CliError::Pipeline { stage: "starting the server", source: other },
    })?;
    emit(json, &json!({ "endpoint": server.endpoint() }), || format!("listening on {}", server.endpoint()));
    server.wait();
    Ok(())
}

fn train_cmd(a: TrainArgs, json: bool) -> CliResult<()> {
    let cfg = a.experiment.resolve(RunConfig::default())?;
    if matches!(cfg.method, Method::Perplexity | Method::Exact | Method::Heuristic) {
        return Err(config(format!("method: {:?} has nothing to train", cfg.method)));
    }
    let suite = load_suite(&cfg.suite)?;
    let mut out = OutputDir::create(&a.out)?;
    let mut files = 0;
    for &seed in &cfg.seeds {
        let cache = open_cache(a.experiment.cache_dir.as_deref(), &suite, &run::generation(&cfg, seed))?;
        let inputs = gather(&suite, &cfg, seed, cache.as_ref())?;
        match train(&suite, &cfg, seed, &inputs)? {
            Trained::Heads { heads, selectors } => {
                for h in &heads {
                    out.write(
                        &format!("seed-{seed}/heads/{}.json", h.base_id),
                        h.to_json().stage("saving heads")?.as_bytes(),
                    )?;
                    files += 1;
                }
                for (h, s) in heads.iter().zip(selectors.iter().flatten()) {
                    out.write(
                        &format!("seed-{seed}/selectors/{}.json", h.base_id),
                        s.to_json().stage("saving selectors")?.as_bytes(),
                    )?;
                    files += 1;
                }
            }
            Trained::Triplet(t) => {
                out.write(
                    &format!("seed-{seed}/triplet.json"),
                    t.to_json().stage("saving the triplet model")?.as_bytes(),
                )?;
                files += 1;
            }
            Trained::Nothing => {}
        }
    }
    let manifest = out.finish(&cfg, suite_fingerprint(&suite))?;
    emit(json, &json!({ "artifacts": manifest.artifacts }), || {
        format!("wrote {files} attributor files to {}", a.out.display())
    });
    Ok(())
}

fn load_trained(dir: &Path, cfg: &RunConfig, seed: u64) -> CliResult<Trained> {
    let seed_dir = dir.join(format!("seed-{seed}"));
    let read_dir = |sub: &str| -> CliResult<Vec<PathBuf>> {
        let d = seed_dir.join(sub);
        if !d.is_dir() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&d)
            .stage("reading trained attributors")?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        Ok(paths)
    };
    let bad = |e: attrib_core::Error| config(format!("trained: {e}"));
    match cfg.method {
        Method::Classifier => {
            let heads = read_dir("heads")?
                .iter()
                .map(|p| BinaryAttributor::load(p).map_err(bad))
                .collect::<CliResult<Vec<_>>>()?;
            if heads.is_empty() {
                return Err(config(format!("trained: no heads under {}", seed_dir.display())));
            }
            let selectors = read_dir("selectors")?
                .iter()
                .map(|p| SelectorPolicy::load(p).map_err(bad))
                .collect::<CliResult<Vec<_>>>()?;
            let selectors = (!selectors.is_empty()).then_some(selectors);
            Ok(Trained::Heads { heads, selectors })
        }
        Method::Triplet => Ok(Trained::Triplet(TripletAttributor::load(&seed_dir.join("triplet.json")).map_err(bad)?)),
        _ => Ok(Trained::Nothing),
    }
}

fn attribute_cmd(a: AttributeArgs, json: bool) -> CliResult<()> {
    let base = match RunManifest::read(&a.trained.join("manifest.json")) {
        Ok(m) => m.config,
        Err(_) => RunConfig::default(),
    };
    let cfg = a.experiment.resolve(base)?;
    let suite = load_suite(&cfg.suite)?;
    let mut out = OutputDir::create(&a.out)?;
    let mut all = Vec::new();
    for &seed in &cfg.seeds {
        let trained = load_trained(&a.trained, &cfg, seed)?;
        let cache = open_cache(a.experiment.cache_dir.as_deref(), &suite, &run::generation(&cfg, seed))?;
        let inputs = gather(&suite, &cfg, seed, cache.as_ref())?;
        let result = attribute(&suite, &cfg, &inputs, &trained)?;
        let metrics = score_attribution(&result, &suite.registry, &suite.finetuned_ids()).stage("scoring")?;
        write_seed(&mut out, seed, &result, &metrics)?;
        all.push(metrics);
    }
    let rep = run::report(&cfg, &all);
    out.write("report.json", &json_bytes(&rep)?)?;
    out.finish(&cfg, suite_fingerprint(&suite))?;
    emit(json, &rep, || report_text(&rep));
    Ok(())
}

fn tested_pairs(suite: &Suite, specs: &[String]) -> CliResult<Vec<(String, String)>> {
    specs
        .iter()
        .map(|s| {
            let (base, family) = match s.split_once(':') {
                Some((b, f)) => (b.to_string(), Some(f.to_string())),
                None => (s.clone(), None),
            };
            let entry = suite
                .manifest
                .bases
                .iter()
                .find(|b| b.id == base)
                .ok_or_else(|| config(format!("tested: unknown base `{base}`")))?;
            let own = &suite.corpora[&entry.corpus].tag;
            let family = match family {
                Some(f) => f,
                None => default_ood_family(own)
                    .ok_or_else(|| config(format!("tested: no default out-of-distribution family for `{own}`")))?
                    .to_string(),
            };
            Ok((base, family))
        })
        .collect()
}

fn sweep(a: SweepArgs, json: bool) -> CliResult<()> {
    let suite = load_suite(&a.suite.spec())?;
    let settings = SweepSettings::default();
    let counts = || -> CliResult<Vec<usize>> {
        a.grid
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(config(format!("grid: {v} is not a prompt count")))
                }
            })
            .collect()
    };
    let bad = |e: attrib_core::Error| match e {
        attrib_core::Error::InvalidArgument(m) => config(format!("sweep: {m}")),
        other => CliError::Pipeline { stage: "sweep", source: other },
    };
    let grid: AblationGrid = match a.axis {
        SweepAxis::PromptCount => sweep_prompt_count(&suite, &counts()?, &settings, &a.seeds).map_err(bad)?,
        SweepAxis::PretrainSize => sweep_pretrain_size(&suite, &counts()?, &settings, &a.seeds).map_err(bad)?,
        SweepAxis::Strength => {
            let tested = tested_pairs(&suite, &a.tested)?;
            sweep_finetune(
                &suite,
                &tested,
                FinetuneAxis::Strength { fraction: a.fraction },
                &a.grid,
                &settings,
                &a.seeds,
            )
            .map_err(bad)?
        }
        SweepAxis::DataFraction => {
            let tested = tested_pairs(&suite, &a.tested)?;
            let axis = FinetuneAxis::DataFraction { strength: a.at_strength };
            sweep_finetune(&suite, &tested, axis, &a.grid, &settings, &a.seeds).map_err(bad)?
        }
    };
    let mut out = OutputDir::create(&a.out)?;
    grid.write_csv(&out.path("grid.csv")?).stage("writing outputs")?;
    out.record("grid.csv");
    out.write("grid.json", &json_bytes(&grid)?)?;
    let table = grid.summary_table();
    out.write("summary.txt", table.as_bytes())?;
    let mut cfg = RunConfig { seeds: a.seeds.clone(), ..RunConfig::default() };
    cfg.suite = a.suite.spec();
    out.finish(&cfg, suite_fingerprint(&suite))?;
    emit(
        json,
        &json!({ "axis": grid.axis, "grid": grid.grid, "seeds": grid.seeds, "cells": grid.cells.len() }),
        || table,
    );
    Ok(())
}

fn report_text(r: &RunReport) -> String {
    let mut s =
        format!("{} | {} | {} | {}: median TP {}/{}\n", r.method, r.level, r.repr, r.prompts, r.median_tp, r.targets);
    for ((seed, tp), auc) in r.seeds.iter().zip(&r.tp).zip(&r.mean_auc) {
        let auc = auc.map(|a| format!("{a:.3}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!("  seed {seed}: TP {tp}/{}  mean AUC {auc}\n", r.targets));
    }
    s.pop();
    s
}

fn report(a: ReportArgs, json: bool) -> CliResult<()> {
    let report_path = a.run.join("report.json");
    if report_path.is_file() {
        let text = fs::read_to_string(&report_path).stage("reading the report")?;
        let rep: RunReport = serde_json::from_str(&text).map_err(|e| config(format!("run: {e}")))?;
        emit(json, &rep, || report_text(&rep));
        return Ok(());
    }
    let grid_path = a.run.join("grid.json");
    if grid_path.is_file() {
        let text = fs::read_to_string(&grid_path).stage("reading the sweep")?;
        let grid: AblationGrid = serde_json::from_str(&text).map_err(|e| config(format!("run: {e}")))?;
        emit(json, &grid, || grid.summary_table());
        return Ok(());
    }
    Err(config(format!("run: {} holds neither report.json nor grid.json", a.run.display())))
}

fn run_cmd(a: RunArgs, json: bool) -> CliResult<()> {
    let (base, expected) = match &a.manifest {
        Some(p) => {
            let m = RunManifest::read(p)?;
            (m.config, Some(m.suite_fingerprint))
        }
        None => (RunConfig::default(), None),
    };
    let cfg = a.experiment.resolve(base.clone())?;
    // a manifest pins its suite; pointing the re-run elsewhere drops the check
    let expected = expected.filter(|_| cfg.suite == base.suite);
    let (_, rep) = run(&cfg, &a.out, a.experiment.cache_dir.as_deref(), expected.as_deref())?;
    emit(json, &rep, || report_text(&rep));
    Ok(())
}
