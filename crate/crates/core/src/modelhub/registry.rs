use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::simlm::{GenerationConfig, NGramModel, Role};

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    /// Compute time reported by the backend; local models leave it empty and
    /// the caller measures wall-clock time.
    pub compute_micros: Option<u64>,
}

/// Anything that answers prompts: a local model or a remote endpoint.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str, config: &GenerationConfig) -> Result<Generation>;
}

impl Generator for NGramModel {
    fn generate(&self, prompt: &str, config: &GenerationConfig) -> Result<Generation> {
        config.validate()?;
        Ok(Generation { text: NGramModel::generate(self, prompt, config), compute_micros: None })
    }
}

/// Public view of a registry entry: no lineage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInfo {
    pub model_id: String,
    pub role: Role,
}

struct Entry {
    role: Role,
    generator: Arc<dyn Generator>,
    base_model: Option<Arc<NGramModel>>,
    lineage_base: Option<String>,
}

/// The sets of base, fine-tuned and auxiliary models under study.
///
/// Lineage of fine-tuned models is held here for evaluation only and is not
/// reachable through any public method.
pub struct ModelRegistry {
    entries: BTreeMap<String, Entry>,
}

#[derive(Default)]
pub struct RegistryBuilder {
    entries: Vec<(String, Entry)>,
}

impl RegistryBuilder {
    /// Role and lineage come from the model itself.
    pub fn local(mut self, model: Arc<NGramModel>) -> Self {
        let lineage = model.lineage().clone();
        let base_model = (lineage.role == Role::Base).then(|| model.clone());
        self.entries.push((
            model.id().to_string(),
            Entry { role: lineage.role, generator: model, base_model, lineage_base: lineage.base_id },
        ));
        self
    }

    /// `lineage_base` may be `None` for fine-tuned models whose origin is unknown.
    pub fn remote(
        mut self,
        id: impl Into<String>,
        role: Role,
        generator: Arc<dyn Generator>,
        lineage_base: Option<String>,
    ) -> Self {
        self.entries.push((id.into(), Entry { role, generator, base_model: None, lineage_base }));
        self
    }

    pub fn build(self) -> Result<ModelRegistry> {
        let mut entries = BTreeMap::new();
        for (id, e) in self.entries {
            if entries.insert(id.clone(), e).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        for (id, e) in &entries {
            match (e.role, &e.lineage_base) {
                (Role::Base, Some(_)) => return Err(invalid(format!("base model `{id}` cannot have a lineage"))),
                (Role::Aux, None) => return Err(invalid(format!("aux model `{id}` needs a known base"))),
                (_, Some(b)) if entries.get(b).map(|x| x.role) != Some(Role::Base) => {
                    return Err(invalid(format!("`{id}` derives from `{b}`, which is not a registered base")))
                }
                _ => {}
            }
        }
        Ok(ModelRegistry { entries })
    }
}

impl ModelRegistry {
    pub fn builder() -> RegistryBuilder {
        RegistryBuilder::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.entries.iter().map(|(id, e)| ModelInfo { model_id: id.clone(), role: e.role }).collect()
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<String> {
        self.entries.iter().filter(|(_, e)| e.role == role).map(|(id, _)| id.clone()).collect()
    }

    pub fn role(&self, id: &str) -> Result<Role> {
        self.entries.get(id).map(|e| e.role).ok_or_else(|| Error::UnknownModel(id.into()))
    }

    pub fn generator(&self, id: &str) -> Result<&Arc<dyn Generator>> {
        self.entries.get(id).map(|e| &e.generator).ok_or_else(|| Error::UnknownModel(id.into()))
    }

    /// White-box access to a local base model (perplexity attribution).
    pub fn base_model(&self, id: &str) -> Result<&Arc<NGramModel>> {
        self.entries.get(id).and_then(|e| e.base_model.as_ref()).ok_or_else(|| Error::UnknownModel(id.into()))
    }

    /// Lineage of an auxiliary model; the attribution developer built these.
    pub(crate) fn aux_base(&self, id: &str) -> Result<&str> {
        match self.entries.get(id) {
            Some(e) if e.role == Role::Aux => Ok(e.lineage_base.as_deref().expect("validated at build")),
            Some(_) => Err(invalid(format!("`{id}` is not an auxiliary model"))),
            None => Err(Error::UnknownModel(id.into())),
        }
    }

    /// Ground truth for scoring. Only the eval module reads this.
    pub(crate) fn ground_truth(&self, id: &str) -> Option<&str> {
        let (key, e) = self.entries.get_key_value(id)?;
        match e.role {
            Role::Base => Some(key.as_str()),
            _ => e.lineage_base.as_deref(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Tokenizer;
    use crate::simlm::{finetune, train_ngram, Corpus};

    fn models() -> (Arc<NGramModel>, Arc<NGramModel>) {
        let t = Arc::new(Tokenizer::fit(["abc"]));
        let c = Corpus::new("c", "t", vec!["abcabc".into()]).unwrap();
        let b = train_ngram("b", &c, 2, 0.1, t).unwrap();
        let f = finetune(&b, "f", &c, 1.0, 1).unwrap();
        (Arc::new(b), Arc::new(f))
    }

    #[test]
    fn listing_hides_lineage() {
        let (b, f) = models();
        let r = ModelRegistry::builder().local(b).local(f).build().unwrap();
        let json = serde_json::to_string(&r.list()).unwrap();
        assert_eq!(json, r#"[{"model_id":"b","role":"base"},{"model_id":"f","role":"finetuned"}]"#);
        assert_eq!(r.ground_truth("f"), Some("b"));
        assert!(r.base_model("f").is_err());
    }

    #[test]
    fn rejects_dangling_lineage_and_duplicates() {
        let (b, f) = models();
        assert!(ModelRegistry::builder().local(f.clone()).build().is_err());
        assert!(ModelRegistry::builder().local(b.clone()).local(b).local(f).build().is_err());
    }
}
