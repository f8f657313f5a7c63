use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::{id_ordered_sum, ContextCounts, Lineage, NGramModel};
use crate::error::{Error, Result};
use crate::features::Tokenizer;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Separator between context tokens in serialized keys.
const KEY_SEP: char = '\u{1f}';

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    model_id: String,
    order: usize,
    smoothing_k: f64,
    vocab: Vec<String>,
    counts: BTreeMap<String, BTreeMap<String, f64>>,
    lineage: Lineage,
}

impl NGramModel {
    pub fn to_json(&self) -> Result<String> {
        let tok = &self.tokenizer;
        let name = |id: u32| tok.token(id).unwrap_or_default().to_string();
        let counts = self
            .counts
            .iter()
            .map(|(ctx, cc)| {
                let key = ctx.iter().map(|&t| name(t)).collect::<Vec<_>>().join(&KEY_SEP.to_string());
                let inner = cc.next.iter().map(|(&t, &c)| (name(t), c)).collect();
                (key, inner)
            })
            .collect();
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model_id: self.id.clone(),
            order: self.order,
            smoothing_k: self.smoothing_k,
            vocab: tok.tokens().to_vec(),
            counts,
            lineage: self.lineage.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a model; `shared` is reused when its vocabulary matches.
    pub fn from_json(json: &str, shared: Option<&Arc<Tokenizer>>) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(json)?;
        let bad = |message: String| Error::Format { path: file.model_id.clone(), message };
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(bad(format!("unsupported format_version {}", file.format_version)));
        }
        let tokenizer = match shared {
            Some(t) if t.tokens() == file.vocab.as_slice() => t.clone(),
            _ => Arc::new(Tokenizer::from_vocab(file.vocab.clone())?),
        };
        let mut model = NGramModel::untrained(file.model_id.clone(), file.order, file.smoothing_k, tokenizer)?;
        let lookup = |s: &str| model.tokenizer.id(s).ok_or_else(|| bad(format!("token {s:?} not in vocab")));
        let mut counts = std::collections::HashMap::with_capacity(file.counts.len());
        for (key, inner) in &file.counts {
            let ctx: Vec<u32> =
                if file.order == 1 { Vec::new() } else { key.split(KEY_SEP).map(lookup).collect::<Result<_>>()? };
            if ctx.len() != file.order - 1 {
                return Err(bad(format!("context {key:?} has wrong length")));
            }
            let mut cc = ContextCounts::default();
            for (tok, &c) in inner {
                if c < 0.0 || !c.is_finite() {
                    return Err(bad(format!("negative or non-finite count {c}")));
                }
                cc.next.insert(lookup(tok)?, c);
            }
            cc.total = id_ordered_sum(&cc.next);
            counts.insert(ctx.into_boxed_slice(), cc);
        }
        model.counts = counts;
        model.lineage = file.lineage;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, shared: Option<&Arc<Tokenizer>>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, shared)
    }
}
