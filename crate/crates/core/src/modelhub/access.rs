use serde::{Deserialize, Serialize};

use super::{ModelRegistry, ResponseTable};
use crate::error::{Error, Result};
use crate::simlm::Role;

/// What the attribution developer may use for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KnowledgeLevel {
    /// Base models plus a self-built auxiliary set of fine-tunes.
    #[serde(rename = "K_U")]
    Universal,
    /// Black-box queries to base models only.
    #[serde(rename = "K_R")]
    Restricted,
}

impl KnowledgeLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            KnowledgeLevel::Universal => "K_U",
            KnowledgeLevel::Restricted => "K_R",
        }
    }
}

impl std::fmt::Display for KnowledgeLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for KnowledgeLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K_U" | "KU" | "universal" => Ok(KnowledgeLevel::Universal),
            "K_R" | "KR" | "restricted" => Ok(KnowledgeLevel::Restricted),
            other => Err(Error::InvalidArgument(format!("unknown knowledge level `{other}`"))),
        }
    }
}

/// The only path from collected responses to training data.
///
/// Fine-tuned models are never readable here; auxiliary models only at `K_U`.
#[derive(Clone, Copy)]
pub struct TrainingView<'a> {
    registry: &'a ModelRegistry,
    level: KnowledgeLevel,
}

impl ModelRegistry {
    pub fn training_view(&self, level: KnowledgeLevel) -> TrainingView<'_> {
        TrainingView { registry: self, level }
    }
}

impl<'a> TrainingView<'a> {
    pub fn level(&self) -> KnowledgeLevel {
        self.level
    }

    pub fn bases(&self) -> Vec<String> {
        self.registry.ids_with_role(Role::Base)
    }

    /// `(aux id, base id)` pairs.
    pub fn aux_models(&self) -> Result<Vec<(String, String)>> {
        self.require_universal("auxiliary models")?;
        self.registry
            .ids_with_role(Role::Aux)
            .into_iter()
            .map(|id| {
                let base = self.registry.aux_base(&id)?.to_string();
                Ok((id, base))
            })
            .collect()
    }

    fn require_universal(&self, what: &str) -> Result<()> {
        match self.level {
            KnowledgeLevel::Universal => Ok(()),
            KnowledgeLevel::Restricted => Err(Error::KnowledgeLevel { level: "K_R", what: what.into() }),
        }
    }

    pub fn check_readable(&self, model_id: &str) -> Result<()> {
        match self.registry.role(model_id)? {
            Role::Base => Ok(()),
            Role::Aux => self.require_universal(&format!("training on auxiliary model `{model_id}`")),
            Role::Finetuned => Err(Error::KnowledgeLevel {
                level: self.level.as_str(),
                what: format!("training on fine-tuned model `{model_id}`"),
            }),
        }
    }

    pub fn response<'t>(&self, table: &'t ResponseTable, model_id: &str, prompt_id: &str) -> Result<&'t str> {
        self.check_readable(model_id)?;
        table.response(model_id, prompt_id)
    }
}
