use std::collections::{BTreeMap, BTreeSet};

use super::result::{AttributionResult, Direction};
use crate::error::{Error, Result};
use crate::modelhub::ResponseTable;
use crate::promptsel::PromptSet;
use crate::text::canonical;

/// Counts prompts on which a target and a base respond identically after
/// whitespace and case normalization. A target matching no base on any
/// prompt is unattributable.
pub fn attribute_exact_match(
    base_table: &ResponseTable,
    target_table: &ResponseTable,
    bases: &[String],
    targets: &[String],
    prompts: &PromptSet,
) -> Result<AttributionResult> {
    let (bc, tc) = (&base_table.provenance.config, &target_table.provenance.config);
    if bc != tc {
        return Err(Error::ConfigMismatch(format!("base responses used {bc:?}, targets used {tc:?}")));
    }
    base_table.check_coverage(bases.iter().map(String::as_str), prompts)?;
    target_table.check_coverage(targets.iter().map(String::as_str), prompts)?;
    let mut scores = BTreeMap::new();
    let mut unattributable = BTreeSet::new();
    for t in targets {
        let mut row = BTreeMap::new();
        for b in bases {
            let mut n = 0.0;
            for p in prompts.ids() {
                if canonical(target_table.response(t, p)?) == canonical(base_table.response(b, p)?) {
                    n += 1.0;
                }
            }
            row.insert(b.clone(), n);
        }
        if row.values().all(|&v| v == 0.0) {
            unattributable.insert(t.clone());
        }
        scores.insert(t.clone(), row);
    }
    AttributionResult::from_scores("exact", Direction::Max, bases.to_vec(), scores, unattributable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelhub::ResponseRecord;
    use crate::promptsel::{Prompt, SourceTag};
    use crate::simlm::GenerationConfig;

    fn table(rows: &[(&str, &str, &str)], seed: u64) -> ResponseTable {
        let mut t = ResponseTable::new("p", GenerationConfig::with_seed(seed));
        for &(m, p, r) in rows {
            t.insert(ResponseRecord {
                prompt_id: p.into(),
                model_id: m.into(),
                prompt: String::new(),
                response: r.into(),
                latency_micros: 0,
                seed,
            });
        }
        t
    }

    fn prompts() -> PromptSet {
        let mk =
            |id: &str| Prompt { prompt_id: id.into(), text: id.into(), source_tag: SourceTag::P1, origin: "x".into() };
        PromptSet::new("p", None, vec![mk("p0"), mk("p1")]).unwrap()
    }

    #[test]
    fn counts_match_bruteforce_with_collision() {
        let rows = [
            ("a", "p0", "same"),
            ("a", "p1", "alpha"),
            ("b", "p0", "same"),
            ("b", "p1", "beta"),
            ("fa", "p0", "same "),
            ("fa", "p1", "Alpha"),
            ("fb", "p0", "other"),
            ("fb", "p1", "beta"),
        ];
        let t = table(&rows, 0);
        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let r = attribute_exact_match(&t, &t, &ids(&["a", "b"]), &ids(&["fa", "fb"]), &prompts()).unwrap();
        for f in ["fa", "fb"] {
            for b in ["a", "b"] {
                let oracle = ["p0", "p1"]
                    .iter()
                    .filter(|p| {
                        let get =
                            |m: &str| rows.iter().find(|r| r.0 == m && r.1 == **p).unwrap().2.trim().to_lowercase();
                        get(f) == get(b)
                    })
                    .count() as f64;
                assert_eq!(r.scores[f][b], oracle);
            }
        }
        assert_eq!(r.predicted["fa"], "a");
        assert_eq!(r.predicted["fb"], "b");
        assert!(r.ties.is_empty());
    }

    #[test]
    fn config_mismatch_rejected_and_zero_rows_unattributable() {
        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let b = table(&[("a", "p0", "x"), ("a", "p1", "y")], 0);
        let f = table(&[("f", "p0", "u"), ("f", "p1", "v")], 1);
        assert!(matches!(
            attribute_exact_match(&b, &f, &ids(&["a"]), &ids(&["f"]), &prompts()),
            Err(Error::ConfigMismatch(_))
        ));
        let f = table(&[("f", "p0", "u"), ("f", "p1", "v")], 0);
        let r = attribute_exact_match(&b, &f, &ids(&["a"]), &ids(&["f"]), &prompts()).unwrap();
        assert!(r.unattributable.contains("f"));
        assert!(!r.predicted.contains_key("f"));
    }
}
