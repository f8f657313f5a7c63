use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_input, InputRepr};
use crate::modelhub::{KnowledgeLevel, ModelRegistry, ResponseTable};
use crate::promptsel::PromptSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub label: bool,
    /// Models whose responses built the input, base slot first.
    pub sources: Vec<String>,
    pub prompt_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub base_id: String,
    pub repr: InputRepr,
    pub level: KnowledgeLevel,
    pub prompt_set_id: String,
    pub examples: Vec<Example>,
}

impl TrainingSet {
    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.examples.len() - self.positives()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }
}

/// One-vs-rest examples for the head of `base_id`.
///
/// Every head built from the same table, prompts, representation and level
/// sees the same inputs; only labels differ.
///
/// * `I_B`: one input per readable model (bases, plus auxiliary models at
///   `K_U`), labelled by lineage.
/// * `I_F`: one input per auxiliary model (`K_U` only).
/// * `I_BF`: one input per (base, auxiliary) pair, positive only when both
///   come from `base_id`. Mismatched pairs are the negatives a head meets at
///   prediction time.
pub fn make_training_set(
    base_id: &str,
    registry: &ModelRegistry,
    table: &ResponseTable,
    prompts: &PromptSet,
    repr: InputRepr,
    level: KnowledgeLevel,
) -> Result<TrainingSet> {
    let view = registry.training_view(level);
    let bases = view.bases();
    if !bases.iter().any(|b| b == base_id) {
        return Err(Error::UnknownModel(base_id.into()));
    }
    if level == KnowledgeLevel::Restricted && repr != InputRepr::Base {
        return Err(Error::KnowledgeLevel {
            level: "K_R",
            what: format!("input representation {repr}; only base responses are available"),
        });
    }
    let aux = match level {
        KnowledgeLevel::Universal => view.aux_models()?,
        KnowledgeLevel::Restricted => Vec::new(),
    };

    let mut examples = Vec::new();
    for p in prompts.prompts() {
        let pid = p.prompt_id.as_str();
        match repr {
            InputRepr::Base => {
                let readable = bases.iter().map(|b| (b, b)).chain(aux.iter().map(|(a, b)| (a, b)));
                for (model, lineage) in readable {
                    let r = view.response(table, model, pid)?;
                    examples.push(Example {
                        text: build_input(repr, &p.text, Some(r), None)?,
                        label: lineage == base_id,
                        sources: vec![model.clone()],
                        prompt_id: pid.into(),
                    });
                }
            }
            InputRepr::Finetuned => {
                for (a, lineage) in &aux {
                    let r = view.response(table, a, pid)?;
                    examples.push(Example {
                        text: build_input(repr, &p.text, None, Some(r))?,
                        label: lineage == base_id,
                        sources: vec![a.clone()],
                        prompt_id: pid.into(),
                    });
                }
            }
            InputRepr::BaseAndFinetuned => {
                for b in &bases {
                    let rb = view.response(table, b, pid)?;
                    for (a, lineage) in &aux {
                        let ra = view.response(table, a, pid)?;
                        examples.push(Example {
                            text: build_input(repr, &p.text, Some(rb), Some(ra))?,
                            label: b == base_id && lineage == base_id,
                            sources: vec![b.clone(), a.clone()],
                            prompt_id: pid.into(),
                        });
                    }
                }
            }
        }
    }
    let set = TrainingSet { base_id: base_id.into(), repr, level, prompt_set_id: prompts.id.clone(), examples };
    log::debug!("training set for {base_id}: {} positives, {} negatives", set.positives(), set.negatives());
    Ok(set)
}

/// `(I_B input, lineage base)` for every readable model's response to every
/// prompt: bases at `K_R`, bases and auxiliary models at `K_U`.
pub fn labelled_inputs(
    registry: &ModelRegistry,
    table: &ResponseTable,
    prompts: &PromptSet,
    level: KnowledgeLevel,
) -> Result<Vec<(String, String)>> {
    let view = registry.training_view(level);
    let mut models: Vec<(String, String)> = view.bases().into_iter().map(|b| (b.clone(), b)).collect();
    if level == KnowledgeLevel::Universal {
        models.extend(view.aux_models()?);
    }
    let mut out = Vec::with_capacity(models.len() * prompts.len());
    for p in prompts.prompts() {
        for (model, lineage) in &models {
            let r = view.response(table, model, &p.prompt_id)?;
            out.push((build_input(InputRepr::Base, &p.text, Some(r), None)?, lineage.clone()));
        }
    }
    Ok(out)
}
