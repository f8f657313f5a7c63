use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceTag {
    P1,
    P2,
    P3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prompt {
    pub prompt_id: String,
    pub text: String,
    pub source_tag: SourceTag,
    /// Tag of the corpus the prompt was drawn from.
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub id: String,
    /// Seed the set was sampled with, when sampling was involved.
    pub seed: Option<u64>,
    prompts: Vec<Prompt>,
}

impl PromptSet {
    pub fn new(id: impl Into<String>, seed: Option<u64>, prompts: Vec<Prompt>) -> Result<Self> {
        let id = id.into();
        if prompts.is_empty() {
            return Err(invalid(format!("prompt set `{id}` is empty")));
        }
        let mut seen = HashSet::new();
        for p in &prompts {
            if !seen.insert(p.prompt_id.as_str()) {
                return Err(Error::DuplicateId(p.prompt_id.clone()));
            }
        }
        Ok(Self { id, seed, prompts })
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn get(&self, prompt_id: &str) -> Option<&Prompt> {
        self.prompts.iter().find(|p| p.prompt_id == prompt_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.prompts.iter().map(|p| p.prompt_id.as_str())
    }

    /// Concatenation; ids must stay unique.
    pub fn union(&self, other: &PromptSet, id: impl Into<String>) -> Result<Self> {
        let mut prompts = self.prompts.clone();
        prompts.extend(other.prompts.iter().cloned());
        Self::new(id, None, prompts)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "prompts".into());
        let reader = BufReader::new(fs::File::open(path)?);
        let mut prompts = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            prompts.push(serde_json::from_str(&line).map_err(|e| Error::Format {
                path: format!("{}:{}", path.display(), i + 1),
                message: e.to_string(),
            })?);
        }
        Self::new(id, None, prompts)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for p in &self.prompts {
            writeln!(f, "{}", serde_json::to_string(p)?)?;
        }
        Ok(())
    }
}
