use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelRegistry;
use crate::error::{Error, Result};
use crate::promptsel::PromptSet;
use crate::simlm::GenerationConfig;

/// One response `m(p)`. Cache files hold one of these per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub prompt_id: String,
    pub model_id: String,
    pub prompt: String,
    pub response: String,
    pub latency_micros: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectFailure {
    pub model_id: String,
    pub prompt_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub prompt_set_id: String,
    pub collected_at: u64,
    pub config: GenerationConfig,
    /// Fresh generator invocations per model in this collection.
    pub queries: BTreeMap<String, usize>,
}

/// Responses indexed by `(model_id, prompt_id)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTable {
    pub provenance: Provenance,
    records: BTreeMap<(String, String), ResponseRecord>,
    pub failures: Vec<CollectFailure>,
}

impl ResponseTable {
    pub fn new(prompt_set_id: impl Into<String>, config: GenerationConfig) -> Self {
        Self {
            provenance: Provenance {
                prompt_set_id: prompt_set_id.into(),
                collected_at: unix_now(),
                config,
                queries: BTreeMap::new(),
            },
            records: BTreeMap::new(),
            failures: Vec::new(),
        }
    }

    pub fn insert(&mut self, record: ResponseRecord) {
        self.records.insert((record.model_id.clone(), record.prompt_id.clone()), record);
    }

    pub fn get(&self, model_id: &str, prompt_id: &str) -> Option<&ResponseRecord> {
        self.records.get(&(model_id.to_string(), prompt_id.to_string()))
    }

    pub fn response(&self, model_id: &str, prompt_id: &str) -> Result<&str> {
        self.get(model_id, prompt_id)
            .map(|r| r.response.as_str())
            .ok_or_else(|| Error::MissingResponses(vec![(model_id.into(), prompt_id.into())]))
    }

    pub fn records(&self) -> impl Iterator<Item = &ResponseRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn invocations(&self) -> usize {
        self.provenance.queries.values().sum()
    }

    /// Errors listing every missing `(model, prompt)` pair.
    pub fn check_coverage<'a>(&self, models: impl IntoIterator<Item = &'a str>, prompts: &PromptSet) -> Result<()> {
        let mut gaps = Vec::new();
        for m in models {
            for p in prompts.ids() {
                if self.get(m, p).is_none() {
                    gaps.push((m.to_string(), p.to_string()));
                }
            }
        }
        if gaps.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingResponses(gaps))
        }
    }

    /// Adds every record of `other`; provenance configs must agree.
    pub fn merge(&mut self, other: ResponseTable) -> Result<()> {
        if other.provenance.config != self.provenance.config {
            return Err(Error::ConfigMismatch("cannot merge tables collected with different configs".into()));
        }
        for (m, q) in other.provenance.queries {
            *self.provenance.queries.entry(m).or_default() += q;
        }
        self.records.extend(other.records);
        self.failures.extend(other.failures);
        Ok(())
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

type CacheKey = (String, String, u64);

/// Append-only JSON Lines cache keyed by `(prompt_id, model_id, seed)`.
///
/// Later lines win when a key repeats. One cache file should serve one
/// generation config (max tokens, temperature).
pub struct ResponseCache {
    path: PathBuf,
    index: Mutex<HashMap<CacheKey, ResponseRecord>>,
    file: Mutex<File>,
}

impl ResponseCache {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut index = HashMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: ResponseRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
                    path: format!("{}:{}", path.display(), i + 1),
                    message: e.to_string(),
                })?;
                index.insert((rec.prompt_id.clone(), rec.model_id.clone(), rec.seed), rec);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { path: path.to_path_buf(), index: Mutex::new(index), file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, prompt_id: &str, model_id: &str, seed: u64) -> Option<ResponseRecord> {
        self.index.lock().unwrap().get(&(prompt_id.to_string(), model_id.to_string(), seed)).cloned()
    }

    pub fn append(&self, record: &ResponseRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        {
            let mut f = self.file.lock().unwrap();
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        self.index
            .lock()
            .unwrap()
            .insert((record.prompt_id.clone(), record.model_id.clone(), record.seed), record.clone());
        Ok(())
    }
}

/// Queries every `(model, prompt)` pair once, serving cached pairs without
/// touching the generator. Generator failures become per-pair failure
/// entries and mark the table partial.
pub fn collect_responses(
    registry: &ModelRegistry,
    models: &[String],
    prompts: &PromptSet,
    config: &GenerationConfig,
    cache: Option<&ResponseCache>,
) -> Result<ResponseTable> {
    config.validate()?;
    for m in models {
        registry.role(m)?;
    }
    let mut table = ResponseTable::new(prompts.id.clone(), *config);
    let mut todo = Vec::new();
    for m in models {
        for p in prompts.prompts() {
            match cache.and_then(|c| c.get(&p.prompt_id, m, config.seed)) {
                Some(rec) if rec.prompt == p.text => table.insert(rec),
                _ => todo.push((m.as_str(), p)),
            }
        }
    }
    let fresh: Vec<_> = todo
        .par_iter()
        .map(|&(m, p)| {
            let generator = registry.generator(m)?;
            let start = Instant::now();
            let out = generator.generate(&p.text, config);
            let elapsed = start.elapsed().as_micros() as u64;
            Ok((m, p, out.map(|g| (g.text, g.compute_micros.unwrap_or(elapsed)))))
        })
        .collect::<Result<_>>()?;
    for (m, p, out) in fresh {
        *table.provenance.queries.entry(m.to_string()).or_default() += 1;
        match out {
            Ok((response, latency_micros)) => {
                let rec = ResponseRecord {
                    prompt_id: p.prompt_id.clone(),
                    model_id: m.to_string(),
                    prompt: p.text.clone(),
                    response,
                    latency_micros,
                    seed: config.seed,
                };
                if let Some(c) = cache {
                    c.append(&rec)?;
                }
                table.insert(rec);
            }
            Err(e) => {
                log::warn!("collection failed for {m}/{}: {e}", p.prompt_id);
                table.failures.push(CollectFailure {
                    model_id: m.to_string(),
                    prompt_id: p.prompt_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(table)
}
