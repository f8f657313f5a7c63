use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;

use super::{Prompt, PromptSet, SourceTag};
use crate::error::{invalid, Result};
use crate::features::Tokenizer;
use crate::seed;
use crate::simlm::Corpus;
use crate::text::normalize;

const SNIPPET_MIN: usize = 5;
const SNIPPET_MAX: usize = 10;

/// Leading 5–10 characters of a document, cut at the last word boundary in
/// that window when there is one. `None` for documents shorter than 5.
pub fn snippet(document: &str) -> Option<String> {
    let chars: Vec<char> = normalize(document).trim().chars().collect();
    if chars.len() < SNIPPET_MIN {
        return None;
    }
    let cut = if chars.len() <= SNIPPET_MAX {
        chars.len()
    } else {
        (SNIPPET_MIN..=SNIPPET_MAX).rev().find(|&i| chars[i] == ' ').unwrap_or(SNIPPET_MAX)
    };
    Some(chars[..cut].iter().collect::<String>().trim_end().to_string())
}

#[derive(Debug, Clone)]
pub struct Curated {
    pub set: PromptSet,
    /// Corpora that could not supply `per_corpus` distinct snippets, with the
    /// number missing.
    pub shortfall: BTreeMap<String, usize>,
}

fn histogram(tok: &Tokenizer, corpus: &Corpus) -> HashMap<u32, u64> {
    let mut h = HashMap::new();
    for d in corpus.documents() {
        for t in tok.encode(d) {
            *h.entry(t).or_default() += 1;
        }
    }
    h
}

/// Selects, per corpus, the `per_corpus` snippets whose rarest token is most
/// specific to that corpus: `count_here(t) / (count_elsewhere(t) + 1)`.
///
/// Ties keep a seeded random order. A corpus whose token histogram equals
/// another corpus's has no distinctive snippets and is sampled uniformly.
pub fn curate_p1(corpora: &[&Corpus], tokenizer: &Tokenizer, per_corpus: usize, seed: u64) -> Result<Curated> {
    if corpora.len() < 2 {
        return Err(invalid("prompt curation needs at least two corpora"));
    }
    let hists: Vec<_> = corpora.iter().map(|c| histogram(tokenizer, c)).collect();
    let mut prompts = Vec::new();
    let mut shortfall = BTreeMap::new();
    for (ci, corpus) in corpora.iter().enumerate() {
        let here = &hists[ci];
        let elsewhere = |t: u32| -> u64 {
            hists.iter().enumerate().filter(|(j, _)| *j != ci).map(|(_, h)| h.get(&t).copied().unwrap_or(0)).sum()
        };
        let indistinct = hists.iter().enumerate().any(|(j, h)| j != ci && h == here);

        let mut seen = HashSet::new();
        let mut candidates: Vec<(String, f64)> = corpus
            .documents()
            .iter()
            .filter_map(|d| snippet(d))
            .filter(|s| seen.insert(s.clone()))
            .map(|s| {
                let score = tokenizer
                    .encode(&s)
                    .into_iter()
                    .min_by_key(|t| (here.get(t).copied().unwrap_or(0), *t))
                    .map(|t| here.get(&t).copied().unwrap_or(0) as f64 / (elsewhere(t) + 1) as f64)
                    .unwrap_or(0.0);
                (s, score)
            })
            .collect();
        candidates.shuffle(&mut seed::derived_rng(seed, &format!("p1/{}", corpus.id)));
        if !indistinct {
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
        }
        let take = candidates.len().min(per_corpus);
        if take < per_corpus {
            shortfall.insert(corpus.id.clone(), per_corpus - take);
            log::warn!("corpus `{}` yields only {take} of {per_corpus} prompts", corpus.id);
        }
        prompts.extend(candidates.into_iter().take(take).enumerate().map(|(k, (text, _))| Prompt {
            prompt_id: format!("p1-{}-{k:02}", corpus.id),
            text,
            source_tag: SourceTag::P1,
            origin: corpus.tag.clone(),
        }));
    }
    Ok(Curated { set: PromptSet::new("p1", Some(seed), prompts)?, shortfall })
}

/// Seeded sample of `n` pool documents without replacement, as leading snippets.
pub fn sample_p2(pool: &Corpus, n: usize, seed: u64) -> Result<PromptSet> {
    if n > pool.len() {
        return Err(invalid(format!("requested {n} prompts from a pool of {}", pool.len())));
    }
    if n == 0 {
        return Err(invalid("requested zero prompts"));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut seed::derived_rng(seed, "p2"));
    let prompts = idx
        .into_iter()
        .take(n)
        .map(|i| {
            let doc = &pool.documents()[i];
            Prompt {
                prompt_id: format!("p2-{i:04}"),
                text: snippet(doc).unwrap_or_else(|| normalize(doc).trim().to_string()),
                source_tag: SourceTag::P2,
                origin: pool.tag.clone(),
            }
        })
        .collect();
    PromptSet::new(format!("p2-n{n}-s{seed}"), Some(seed), prompts)
}
