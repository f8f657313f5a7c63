use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{score_attribution, MetricsReport};
use crate::attributors::{attribute_classifier, attribute_exact_match, HeadConfig, Voting};
use crate::error::{invalid, Error, Result};
use crate::features::InputRepr;
use crate::modelhub::KnowledgeLevel;
use crate::pipeline::{collect_all, train_heads};
use crate::promptsel::{curate_p1, sample_p2};
use crate::seed;
use crate::simlm::GenerationConfig;
use crate::suite::{family_corpus, DerivedEntry, FinetuneSource, Suite, FAMILIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    PromptCount,
    PretrainSize,
    FinetuneStrength,
    FinetuneDataFraction,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::PromptCount => "prompt_count",
            Axis::PretrainSize => "pretrain_size",
            Axis::FinetuneStrength => "finetune_strength",
            Axis::FinetuneDataFraction => "finetune_data_fraction",
        }
    }
}

/// Settings shared by every cell of a sweep. The generation seed is replaced
/// by the cell seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub head: HeadConfig,
    pub generation: GenerationConfig,
    /// P1 prompts per base corpus; P1 is the evaluation set of every cell.
    pub p1_per_corpus: usize,
    /// Documents in each regenerated fine-tuning corpus.
    pub finetune_docs: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            head: HeadConfig::default(),
            generation: GenerationConfig::default(),
            p1_per_corpus: 10,
            finetune_docs: 100,
        }
    }
}

/// Everything needed to recompute one cell from the suite it ran on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellSpec {
    /// Heads trained on `count` P2 prompts, evaluated on P1.
    PromptCount { count: usize, seed: u64, settings: SweepSettings },
    /// Heads pretrained on `count` P2 prompts (none when 0), then trained and
    /// evaluated on P1.
    PretrainSize { count: usize, seed: u64, settings: SweepSettings },
    /// The fine-tune of `tested_base` is regenerated from `source` at the
    /// given strength and data fraction; heads trained and evaluated on P1.
    Finetune {
        tested_base: String,
        source: FinetuneSource,
        strength: f64,
        fraction: f64,
        seed: u64,
        settings: SweepSettings,
    },
}

impl CellSpec {
    pub fn seed(&self) -> u64 {
        match self {
            CellSpec::PromptCount { seed, .. }
            | CellSpec::PretrainSize { seed, .. }
            | CellSpec::Finetune { seed, .. } => *seed,
        }
    }

    fn settings(&self) -> &SweepSettings {
        match self {
            CellSpec::PromptCount { settings, .. }
            | CellSpec::PretrainSize { settings, .. }
            | CellSpec::Finetune { settings, .. } => settings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    /// Paired-series label, empty for single-series sweeps.
    pub series: String,
    pub spec: CellSpec,
    pub report: MetricsReport,
    /// Headline numbers of the cell (`mean_auc`, `tp`, `f1`, ...).
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
}

fn check_grid(grid: &[f64], seeds: &[u64]) -> Result<()> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(invalid("sweep needs at least one grid value and one seed"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("grid {grid:?} is not strictly increasing")));
    }
    Ok(())
}

fn family_of(suite: &Suite, base: &str) -> Result<String> {
    let b = suite.manifest.bases.iter().find(|b| b.id == base).ok_or_else(|| Error::UnknownModel(base.into()))?;
    Ok(suite.corpora[&b.corpus].tag.clone())
}

/// Default out-of-distribution family for a base family: three places along
/// the bundled family list.
pub fn default_ood_family(family: &str) -> Option<&'static str> {
    let i = FAMILIES.iter().position(|f| *f == family)?;
    Some(FAMILIES[(i + 3) % FAMILIES.len()])
}

fn p1_for(suite: &Suite, settings: &SweepSettings, seed: u64) -> Result<crate::promptsel::PromptSet> {
    Ok(curate_p1(&suite.base_corpora(), &suite.tokenizer, settings.p1_per_corpus, seed)?.set)
}

/// Recomputes one cell. Identical specs on identical suites give identical
/// numbers.
pub fn run_cell(suite: &Suite, spec: &CellSpec) -> Result<(MetricsReport, BTreeMap<String, f64>)> {
    let settings = spec.settings();
    let seed = spec.seed();
    let generation = GenerationConfig { seed, ..settings.generation };
    let head = HeadConfig { seed, ..settings.head };
    let level = KnowledgeLevel::Restricted;
    let repr = InputRepr::Base;
    let mut values = BTreeMap::new();

    let (suite_owned, p1);
    let suite = match spec {
        CellSpec::Finetune { tested_base, source, strength, fraction, .. } => {
            suite_owned = regenerate_finetune(suite, tested_base, source, *strength, *fraction, settings, seed)?;
            &suite_owned
        }
        _ => suite,
    };
    p1 = p1_for(suite, settings, seed)?;
    let targets = suite.finetuned_ids();
    let t1 = collect_all(suite, &p1, &generation, None)?;

    let heads = match spec {
        CellSpec::PromptCount { count, .. } => {
            let p2 = sample_p2(suite.pool(), *count, seed)?;
            let t2 = collect_all(suite, &p2, &generation, None)?;
            train_heads(&suite.registry, &t2, &p2, repr, level, &head, None)?
        }
        CellSpec::PretrainSize { count, .. } if *count > 0 => {
            let p2 = sample_p2(suite.pool(), *count, seed)?;
            let t2 = collect_all(suite, &p2, &generation, None)?;
            train_heads(&suite.registry, &t1, &p1, repr, level, &head, Some((&t2, &p2)))?
        }
        _ => train_heads(&suite.registry, &t1, &p1, repr, level, &head, None)?,
    };
    let result = attribute_classifier(&heads, &t1, &p1, &targets, Voting::Soft)?;
    let report = score_attribution(&result, &suite.registry, &targets)?;
    values.insert("tp".into(), report.tp as f64);
    if let Some(auc) = report.mean_auc {
        values.insert("mean_auc".into(), auc);
    }
    if let CellSpec::Finetune { tested_base, .. } = spec {
        let tested = suite
            .manifest
            .finetuned
            .iter()
            .find(|d| &d.base == tested_base)
            .map(|d| d.id.clone())
            .ok_or_else(|| Error::UnknownModel(tested_base.clone()))?;
        let h = report.head(tested_base).ok_or_else(|| Error::UnknownModel(tested_base.clone()))?;
        values.insert("f1".into(), h.f1);
        if let Some(auc) = h.auc {
            values.insert("head_auc".into(), auc);
        }
        values.insert("tested_correct".into(), f64::from(u8::from(report.correct[&tested])));
        let exact = attribute_exact_match(&t1, &t1, &suite.base_ids(), &targets, &p1)?;
        let exact_ok = exact.predicted.get(&tested) == Some(tested_base) && !exact.ties.contains(&tested);
        values.insert("exact_correct".into(), f64::from(u8::from(exact_ok)));
    }
    Ok((report, values))
}

fn regenerate_finetune(
    suite: &Suite,
    tested_base: &str,
    source: &FinetuneSource,
    strength: f64,
    fraction: f64,
    settings: &SweepSettings,
    seed: u64,
) -> Result<Suite> {
    let family = match source {
        FinetuneSource::InDistribution => family_of(suite, tested_base)?,
        FinetuneSource::OutOfDistribution(f) => f.clone(),
    };
    let mut replaced = false;
    let mut entries = Vec::new();
    for d in &suite.manifest.finetuned {
        if d.base == tested_base {
            let id = format!("sweep-{tested_base}-{family}");
            let label = format!("sweep-ft/{tested_base}/{family}");
            let corpus =
                family_corpus(&id, &family, settings.finetune_docs, seed::derive(seed, &label))?.fraction(fraction)?;
            entries
                .push((DerivedEntry { corpus: corpus.id.clone(), weight: strength, epochs: 1, ..d.clone() }, corpus));
            replaced = true;
        } else {
            entries.push((d.clone(), suite.corpora[&d.corpus].clone()));
        }
    }
    if !replaced {
        return Err(invalid(format!("no fine-tuned model derives from `{tested_base}`")));
    }
    suite.with_finetuned(entries)
}

fn run_cells(
    suite: &Suite,
    axis: Axis,
    grid: Vec<f64>,
    seeds: Vec<u64>,
    specs: Vec<(f64, String, CellSpec)>,
) -> Result<AblationGrid> {
    let cells = specs
        .into_par_iter()
        .map(|(value, series, spec)| {
            let (report, values) = run_cell(suite, &spec)?;
            Ok(Cell { value, series, spec, report, values })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationGrid { axis, grid, seeds, cells })
}

pub fn sweep_prompt_count(
    suite: &Suite,
    counts: &[usize],
    settings: &SweepSettings,
    seeds: &[u64],
) -> Result<AblationGrid> {
    let grid: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    check_grid(&grid, seeds)?;
    if let Some(c) = counts.iter().find(|&&c| c == 0 || c > suite.pool().len()) {
        return Err(invalid(format!("prompt count {c} outside 1..={}", suite.pool().len())));
    }
    let specs = counts
        .iter()
        .flat_map(|&count| {
            seeds.iter().map(move |&seed| {
                (count as f64, String::new(), CellSpec::PromptCount { count, seed, settings: settings.clone() })
            })
        })
        .collect();
    run_cells(suite, Axis::PromptCount, grid, seeds.to_vec(), specs)
}

pub fn sweep_pretrain_size(
    suite: &Suite,
    sizes: &[usize],
    settings: &SweepSettings,
    seeds: &[u64],
) -> Result<AblationGrid> {
    let grid: Vec<f64> = sizes.iter().map(|&c| c as f64).collect();
    check_grid(&grid, seeds)?;
    if let Some(c) = sizes.iter().find(|&&c| c > suite.pool().len()) {
        return Err(invalid(format!("pretrain size {c} exceeds the pool of {}", suite.pool().len())));
    }
    let specs = sizes
        .iter()
        .flat_map(|&count| {
            seeds.iter().map(move |&seed| {
                (count as f64, String::new(), CellSpec::PretrainSize { count, seed, settings: settings.clone() })
            })
        })
        .collect();
    run_cells(suite, Axis::PretrainSize, grid, seeds.to_vec(), specs)
}

/// Which fine-tuning knob a fine-tune sweep varies; the other stays fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum FinetuneAxis {
    Strength { fraction: f64 },
    DataFraction { strength: f64 },
}

/// Paired in-distribution / out-of-distribution series for each tested base.
/// Series labels are `"{base}/id"` and `"{base}/ood"`.
pub fn sweep_finetune(
    suite: &Suite,
    tested: &[(String, String)],
    axis: FinetuneAxis,
    grid: &[f64],
    settings: &SweepSettings,
    seeds: &[u64],
) -> Result<AblationGrid> {
    check_grid(grid, seeds)?;
    if tested.is_empty() {
        return Err(invalid("no tested base models"));
    }
    for (base, ood) in tested {
        family_of(suite, base)?;
        if !FAMILIES.contains(&ood.as_str()) {
            return Err(invalid(format!("unknown corpus family `{ood}`")));
        }
        if family_of(suite, base)? == *ood {
            return Err(invalid(format!("out-of-distribution family for `{base}` is its own family")));
        }
    }
    match axis {
        FinetuneAxis::Strength { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
            return Err(invalid(format!("data fraction {fraction} outside (0, 1]")))
        }
        FinetuneAxis::DataFraction { strength } if !(strength >= 0.0 && strength.is_finite()) => {
            return Err(invalid(format!("strength {strength} must be non-negative")))
        }
        _ => {}
    }
    let mut specs = Vec::new();
    for (base, ood) in tested {
        for (tag, source) in
            [("id", FinetuneSource::InDistribution), ("ood", FinetuneSource::OutOfDistribution(ood.clone()))]
        {
            for &v in grid {
                let (strength, fraction) = match axis {
                    FinetuneAxis::Strength { fraction } => (v, fraction),
                    FinetuneAxis::DataFraction { strength } => (strength, v),
                };
                for &seed in seeds {
                    specs.push((
                        v,
                        format!("{base}/{tag}"),
                        CellSpec::Finetune {
                            tested_base: base.clone(),
                            source: source.clone(),
                            strength,
                            fraction,
                            seed,
                            settings: settings.clone(),
                        },
                    ));
                }
            }
        }
    }
    let axis = match axis {
        FinetuneAxis::Strength { .. } => Axis::FinetuneStrength,
        FinetuneAxis::DataFraction { .. } => Axis::FinetuneDataFraction,
    };
    run_cells(suite, axis, grid.to_vec(), seeds.to_vec(), specs)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

impl AblationGrid {
    pub fn series(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.cells.iter().map(|c| c.series.as_str()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Seed median of `key` for one (series, value) cell group.
    pub fn median(&self, series: &str, value: f64, key: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.series == series && c.value == value)
            .filter_map(|c| c.values.get(key).copied())
            .collect();
        median(&v)
    }

    fn keys(&self) -> Vec<String> {
        let mut k: Vec<String> = self.cells.iter().flat_map(|c| c.values.keys().cloned()).collect();
        k.sort();
        k.dedup();
        k
    }

    /// One row per cell.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let keys = self.keys();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["axis".to_string(), "value".into(), "series".into(), "seed".into()];
        header.extend(keys.iter().cloned());
        w.write_record(&header)?;
        for c in &self.cells {
            let mut row = vec![
                self.axis.as_str().to_string(),
                format!("{}", c.value),
                c.series.clone(),
                c.spec.seed().to_string(),
            ];
            row.extend(keys.iter().map(|k| c.values.get(k).map(|v| format!("{v}")).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Seed medians per series and grid value, as an aligned text table.
    pub fn summary_table(&self) -> String {
        let keys = self.keys();
        let mut out = String::new();
        let _ = write!(out, "{:<24} {:>10}", "series", self.axis.as_str());
        for k in &keys {
            let _ = write!(out, " {k:>14}");
        }
        out.push('\n');
        for s in self.series() {
            for &v in &self.grid {
                let label = if s.is_empty() { "-" } else { s };
                let _ = write!(out, "{label:<24} {v:>10}");
                for k in &keys {
                    match self.median(s, v, k) {
                        Some(m) => {
                            let _ = write!(out, " {m:>14.4}");
                        }
                        None => {
                            let _ = write!(out, " {:>14}", "-");
                        }
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}
