use std::collections::{BTreeMap, BTreeSet};

use super::result::{AttributionResult, Direction};
use crate::error::{invalid, Error, Result};
use crate::modelhub::ResponseTable;
use crate::promptsel::PromptSet;
use crate::simlm::{perplexity, NGramModel};

/// Mean perplexity of each base on each target's responses; lowest wins.
/// Responses that tokenize to nothing are skipped and counted in the notes.
pub fn attribute_perplexity(
    bases: &[&NGramModel],
    table: &ResponseTable,
    prompts: &PromptSet,
    targets: &[String],
) -> Result<AttributionResult> {
    if bases.is_empty() {
        return Err(invalid("perplexity attribution needs at least one base model"));
    }
    table.check_coverage(targets.iter().map(String::as_str), prompts)?;
    let mut scores = BTreeMap::new();
    let mut unattributable = BTreeSet::new();
    let mut notes = Vec::new();
    for t in targets {
        let mut row = BTreeMap::new();
        let mut skipped = BTreeSet::new();
        for b in bases {
            let mut sum = 0.0;
            let mut n = 0usize;
            for p in prompts.prompts() {
                match perplexity(b, table.response(t, &p.prompt_id)?) {
                    Ok(ppl) => {
                        sum += ppl;
                        n += 1;
                    }
                    Err(Error::EmptyText) => {
                        skipped.insert(p.prompt_id.as_str());
                    }
                    Err(e) => return Err(e),
                }
            }
            row.insert(b.id().to_string(), if n == 0 { f64::INFINITY } else { sum / n as f64 });
        }
        if !skipped.is_empty() {
            notes.push(format!("{t}: skipped {} empty responses", skipped.len()));
        }
        if skipped.len() == prompts.len() {
            unattributable.insert(t.clone());
        }
        scores.insert(t.clone(), row);
    }
    let ids = bases.iter().map(|b| b.id().to_string()).collect();
    let mut r = AttributionResult::from_scores("perplexity", Direction::Min, ids, scores, unattributable)?;
    r.notes = notes;
    Ok(r)
}
