//! The bundled, fully deterministic model suite: corpora, base models,
//! hidden-lineage fine-tunes and an auxiliary set.

mod families;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use families::FAMILIES;

use crate::error::{invalid, Error, Result};
use crate::features::Tokenizer;
use crate::modelhub::ModelRegistry;
use crate::seed;
use crate::simlm::{finetune, train_ngram, Corpus, NGramModel};

pub const SUITE_FORMAT_VERSION: u32 = 1;

/// `n` fresh documents of a family; the same `(family, seed)` always yields
/// the same documents.
pub fn family_corpus(id: impl Into<String>, family: &str, n: usize, seed: u64) -> Result<Corpus> {
    if !FAMILIES.contains(&family) {
        return Err(invalid(format!("unknown corpus family `{family}`")));
    }
    let mut rng = seed::derived_rng(seed, family);
    let docs = (0..n).map(|_| families::document(family, &mut rng)).collect();
    Corpus::new(id, family, docs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    pub path: PathBuf,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseEntry {
    pub id: String,
    pub corpus: String,
    pub heldout: String,
    pub order: usize,
    pub smoothing_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedEntry {
    pub id: String,
    pub base: String,
    pub corpus: String,
    pub weight: f64,
    pub epochs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub format_version: u32,
    pub seed: u64,
    pub corpora: Vec<CorpusEntry>,
    pub bases: Vec<BaseEntry>,
    pub finetuned: Vec<DerivedEntry>,
    #[serde(default)]
    pub aux: Vec<DerivedEntry>,
    /// Corpus the bulk prompt pool is sampled from.
    pub pool: String,
}

/// Where a fine-tune's data comes from relative to its base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneSource {
    /// Fresh documents of the base's own family.
    InDistribution,
    /// Fresh documents of another family.
    OutOfDistribution(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub train_docs: usize,
    pub heldout_docs: usize,
    pub finetune_docs: usize,
    pub aux_docs: usize,
    /// Pool documents per family.
    pub pool_docs: usize,
    pub order: usize,
    pub smoothing_k: f64,
    pub finetune_strength: f64,
    pub aux_strength: f64,
    /// Per-family overrides of the fine-tune data source.
    pub sources: BTreeMap<String, FinetuneSource>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 2023,
            train_docs: 300,
            heldout_docs: 40,
            finetune_docs: 100,
            aux_docs: 100,
            pool_docs: 40,
            order: 3,
            smoothing_k: 0.1,
            finetune_strength: 0.3,
            aux_strength: 0.3,
            sources: BTreeMap::new(),
        }
    }
}

pub fn base_id(family: &str) -> String {
    format!("base-{family}")
}

/// A materialized suite: corpora, trained models and the registry over them.
pub struct Suite {
    pub manifest: SuiteManifest,
    pub tokenizer: Arc<Tokenizer>,
    pub corpora: BTreeMap<String, Corpus>,
    pub models: BTreeMap<String, Arc<NGramModel>>,
    pub registry: ModelRegistry,
}

impl Suite {
    /// Generates corpora for every family and assembles the manifest.
    pub fn bundled(cfg: &SuiteConfig) -> Result<Self> {
        let mut corpora = Vec::new();
        let mut bases = Vec::new();
        let mut finetuned = Vec::new();
        let mut aux = Vec::new();
        let mut pool_docs = Vec::new();
        let s = |label: &str| seed::derive(cfg.seed, label);
        let ft_ids = {
            let mut idx: Vec<usize> = (0..FAMILIES.len()).collect();
            idx.shuffle(&mut seed::derived_rng(cfg.seed, "ft-ids"));
            idx
        };
        for (i, family) in FAMILIES.iter().enumerate() {
            let train =
                family_corpus(format!("{family}-train"), family, cfg.train_docs, s(&format!("{family}/train")))?;
            let heldout =
                family_corpus(format!("{family}-heldout"), family, cfg.heldout_docs, s(&format!("{family}/heldout")))?;
            let ft_family = match cfg.sources.get(*family) {
                None | Some(FinetuneSource::InDistribution) => family.to_string(),
                Some(FinetuneSource::OutOfDistribution(other)) => other.clone(),
            };
            let ft = family_corpus(format!("{family}-ft"), &ft_family, cfg.finetune_docs, s(&format!("{family}/ft")))?;
            let aux_corpus = family_corpus(format!("{family}-aux"), family, cfg.aux_docs, s(&format!("{family}/aux")))?;
            let pool = family_corpus("pool", family, cfg.pool_docs, s(&format!("{family}/pool")))?;
            pool_docs.extend(pool.documents().iter().cloned());

            let base = base_id(family);
            bases.push(BaseEntry {
                id: base.clone(),
                corpus: train.id.clone(),
                heldout: heldout.id.clone(),
                order: cfg.order,
                smoothing_k: cfg.smoothing_k,
            });
            finetuned.push(DerivedEntry {
                id: format!("ft-{:02}", ft_ids[i]),
                base: base.clone(),
                corpus: ft.id.clone(),
                weight: cfg.finetune_strength,
                epochs: 1,
            });
            aux.push(DerivedEntry {
                id: format!("aux-{family}"),
                base,
                corpus: aux_corpus.id.clone(),
                weight: cfg.aux_strength,
                epochs: 1,
            });
            corpora.extend([train, heldout, ft, aux_corpus]);
        }
        // interleave pool documents so any prefix mixes families
        let mut pool_docs_shuffled = pool_docs;
        pool_docs_shuffled.shuffle(&mut seed::derived_rng(cfg.seed, "pool-order"));
        corpora.push(Corpus::new("pool", "pool", pool_docs_shuffled)?);
        finetuned.sort_by(|a, b| a.id.cmp(&b.id));

        let manifest = SuiteManifest {
            format_version: SUITE_FORMAT_VERSION,
            seed: cfg.seed,
            corpora: corpora
                .iter()
                .map(|c| CorpusEntry {
                    id: c.id.clone(),
                    path: PathBuf::from(format!("corpora/{}.txt", c.id)),
                    tag: c.tag.clone(),
                })
                .collect(),
            bases,
            finetuned,
            aux,
            pool: "pool".into(),
        };
        Self::from_parts(manifest, corpora.into_iter().map(|c| (c.id.clone(), c)).collect())
    }

    /// Trains bases and derives fine-tuned and auxiliary models.
    pub fn from_parts(manifest: SuiteManifest, corpora: BTreeMap<String, Corpus>) -> Result<Self> {
        if manifest.format_version != SUITE_FORMAT_VERSION {
            return Err(invalid(format!("unsupported suite format_version {}", manifest.format_version)));
        }
        let tokenizer =
            Arc::new(Tokenizer::fit(corpora.values().flat_map(|c| c.documents().iter().map(String::as_str))));
        Self::assemble(manifest, corpora, tokenizer)
    }

    fn assemble(manifest: SuiteManifest, corpora: BTreeMap<String, Corpus>, tokenizer: Arc<Tokenizer>) -> Result<Self> {
        let corpus =
            |id: &str| corpora.get(id).ok_or_else(|| invalid(format!("manifest references unknown corpus `{id}`")));
        let mut models: BTreeMap<String, Arc<NGramModel>> = BTreeMap::new();
        for b in &manifest.bases {
            corpus(&b.heldout)?;
            let m = train_ngram(&b.id, corpus(&b.corpus)?, b.order, b.smoothing_k, tokenizer.clone())?;
            models.insert(b.id.clone(), Arc::new(m));
        }
        for (entries, aux) in [(&manifest.finetuned, false), (&manifest.aux, true)] {
            for d in entries {
                let base = models.get(&d.base).ok_or_else(|| Error::UnknownModel(d.base.clone()))?;
                let mut m = finetune(base, &d.id, corpus(&d.corpus)?, d.weight, d.epochs)?;
                if aux {
                    m = m.into_aux();
                }
                if models.insert(d.id.clone(), Arc::new(m)).is_some() {
                    return Err(Error::DuplicateId(d.id.clone()));
                }
            }
        }
        corpus(&manifest.pool)?;
        let registry = models.values().fold(ModelRegistry::builder(), |b, m| b.local(m.clone())).build()?;
        Ok(Self { manifest, tokenizer, corpora, models, registry })
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path)?;
        let manifest: SuiteManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format { path: manifest_path.display().to_string(), message: e.to_string() })?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        let mut corpora = BTreeMap::new();
        for c in &manifest.corpora {
            let corpus = Corpus::read(&root.join(&c.path), &c.id, &c.tag)?;
            corpora.insert(c.id.clone(), corpus);
        }
        Self::from_parts(manifest, corpora)
    }

    /// Writes `manifest.json` and the corpus files under `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for c in &self.manifest.corpora {
            let path = dir.join(&c.path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            self.corpora[&c.id].write(&path)?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(path)
    }

    /// Rebuilds the suite with a different fine-tuned set. Bases, auxiliary
    /// models and the tokenizer are unchanged.
    pub fn with_finetuned(&self, finetuned: Vec<(DerivedEntry, Corpus)>) -> Result<Self> {
        let mut manifest = self.manifest.clone();
        let mut corpora = self.corpora.clone();
        let old: Vec<String> = manifest.finetuned.iter().map(|d| d.corpus.clone()).collect();
        manifest.corpora.retain(|c| !old.contains(&c.id));
        for id in &old {
            corpora.remove(id);
        }
        manifest.finetuned.clear();
        for (entry, corpus) in finetuned {
            if entry.corpus != corpus.id {
                return Err(invalid(format!("entry `{}` names corpus `{}`", entry.id, entry.corpus)));
            }
            manifest.corpora.push(CorpusEntry {
                id: corpus.id.clone(),
                path: PathBuf::from(format!("corpora/{}.txt", corpus.id)),
                tag: corpus.tag.clone(),
            });
            corpora.insert(corpus.id.clone(), corpus);
            manifest.finetuned.push(entry);
        }
        Self::assemble(manifest, corpora, self.tokenizer.clone())
    }

    pub fn base_ids(&self) -> Vec<String> {
        self.manifest.bases.iter().map(|b| b.id.clone()).collect()
    }

    pub fn finetuned_ids(&self) -> Vec<String> {
        self.manifest.finetuned.iter().map(|d| d.id.clone()).collect()
    }

    pub fn aux_ids(&self) -> Vec<String> {
        self.manifest.aux.iter().map(|d| d.id.clone()).collect()
    }

    /// Pre-training corpora of the bases, in base order.
    pub fn base_corpora(&self) -> Vec<&Corpus> {
        self.manifest.bases.iter().map(|b| &self.corpora[&b.corpus]).collect()
    }

    pub fn heldout(&self, base: &str) -> Result<&Corpus> {
        let b = self.manifest.bases.iter().find(|b| b.id == base).ok_or_else(|| Error::UnknownModel(base.into()))?;
        Ok(&self.corpora[&b.heldout])
    }

    pub fn pool(&self) -> &Corpus {
        &self.corpora[&self.manifest.pool]
    }

    pub fn model(&self, id: &str) -> Result<&Arc<NGramModel>> {
        self.models.get(id).ok_or_else(|| Error::UnknownModel(id.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteConfig {
        SuiteConfig {
            train_docs: 30,
            heldout_docs: 5,
            finetune_docs: 10,
            aux_docs: 10,
            pool_docs: 4,
            ..Default::default()
        }
    }

    #[test]
    fn bundled_suite_shape() {
        let s = Suite::bundled(&small()).unwrap();
        assert_eq!(s.base_ids().len(), 6);
        assert_eq!(s.finetuned_ids(), (0..6).map(|i| format!("ft-{i:02}")).collect::<Vec<_>>());
        assert_eq!(s.registry.len(), 18);
        assert_eq!(s.pool().len(), 24);
    }

    #[test]
    fn write_then_load_reproduces_models() {
        let s = Suite::bundled(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = s.write(dir.path()).unwrap();
        let back = Suite::load(&path).unwrap();
        assert_eq!(back.manifest, s.manifest);
        for (id, m) in &s.models {
            assert_eq!(back.models[id].to_json().unwrap(), m.to_json().unwrap());
        }
    }
}
