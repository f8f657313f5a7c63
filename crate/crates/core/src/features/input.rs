use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Literal separator between the base and fine-tuned halves of an `I_BF` input.
pub const SEP: &str = "<SEP>";

/// Which responses are concatenated with the prompt to form a classifier input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputRepr {
    #[serde(rename = "I_B")]
    Base,
    #[serde(rename = "I_F")]
    Finetuned,
    #[serde(rename = "I_BF")]
    BaseAndFinetuned,
}

impl InputRepr {
    pub fn as_str(self) -> &'static str {
        match self {
            InputRepr::Base => "I_B",
            InputRepr::Finetuned => "I_F",
            InputRepr::BaseAndFinetuned => "I_BF",
        }
    }
}

impl std::fmt::Display for InputRepr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for InputRepr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I_B" | "IB" | "base" => Ok(InputRepr::Base),
            "I_F" | "IF" | "finetuned" => Ok(InputRepr::Finetuned),
            "I_BF" | "I_B+F" | "IBF" | "both" => Ok(InputRepr::BaseAndFinetuned),
            other => Err(Error::InvalidArgument(format!("unknown input representation `{other}`"))),
        }
    }
}

/// Joins prompt and responses with single spaces and trims the result.
///
/// `I_B` → `p r_b`, `I_F` → `p r_f`, `I_BF` → `p r_b <SEP> p r_f`.
pub fn build_input(
    kind: InputRepr,
    prompt: &str,
    base_response: Option<&str>,
    ft_response: Option<&str>,
) -> Result<String> {
    let missing = |missing| Error::MissingResponse { kind: kind.as_str(), missing };
    let joined = match kind {
        InputRepr::Base => format!("{prompt} {}", base_response.ok_or_else(|| missing("base"))?),
        InputRepr::Finetuned => format!("{prompt} {}", ft_response.ok_or_else(|| missing("fine-tuned"))?),
        InputRepr::BaseAndFinetuned => {
            let b = base_response.ok_or_else(|| missing("base"))?;
            let f = ft_response.ok_or_else(|| missing("fine-tuned"))?;
            format!("{prompt} {b} {SEP} {prompt} {f}")
        }
    };
    Ok(joined.trim().to_string())
}

/// Input for scoring a model under test. `I_B` heads see the tested model's
/// response in the base slot; `I_BF` heads pair it with their own base's response.
pub fn prediction_input(
    kind: InputRepr,
    prompt: &str,
    head_base_response: Option<&str>,
    tested_response: &str,
) -> Result<String> {
    match kind {
        InputRepr::Base => build_input(kind, prompt, Some(tested_response), None),
        InputRepr::Finetuned => build_input(kind, prompt, None, Some(tested_response)),
        InputRepr::BaseAndFinetuned => build_input(kind, prompt, head_base_response, Some(tested_response)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separator_format() {
        let s = build_input(InputRepr::BaseAndFinetuned, "hello", Some("world"), Some("earth")).unwrap();
        assert_eq!(s, "hello world <SEP> hello earth");
    }

    #[test]
    fn empty_prompt_is_trimmed() {
        assert_eq!(build_input(InputRepr::Finetuned, "", None, Some("x")).unwrap(), "x");
    }

    #[test]
    fn base_repr_consumes_tested_response_at_prediction() {
        let s = prediction_input(InputRepr::Base, "p", Some("base says"), "ft says").unwrap();
        assert_eq!(s, "p ft says");
    }

    #[test]
    fn missing_response_names_the_kind() {
        let err = build_input(InputRepr::BaseAndFinetuned, "p", Some("b"), None).unwrap_err();
        assert!(err.to_string().contains("I_BF"), "{err}");
        assert!(build_input(InputRepr::Base, "p", None, Some("f")).is_err());
    }

    #[test]
    fn distinct_kinds_give_distinct_inputs() {
        let a = build_input(InputRepr::Base, "p", Some("r"), Some("r")).unwrap();
        let b = build_input(InputRepr::BaseAndFinetuned, "p", Some("r"), Some("r")).unwrap();
        assert_ne!(a, b);
    }
}
