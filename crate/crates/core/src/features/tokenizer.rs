use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::text::normalize;

pub const UNK_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const STOP_ID: u32 = 2;

pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<bos>";
pub const STOP_TOKEN: &str = "\n";

/// Character-level tokenizer over NFC-normalized, lowercased text.
///
/// Ids are dense from 0. The first three ids are reserved for UNK, BOS and
/// the stop token (newline); every other token is a single character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

impl Tokenizer {
    /// Builds a vocabulary from every character seen in `texts`.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut chars = BTreeSet::new();
        for t in texts {
            chars.extend(normalize(t).chars().filter(|c| *c != '\n'));
        }
        let mut vocab: Vec<String> = vec![UNK_TOKEN.into(), BOS_TOKEN.into(), STOP_TOKEN.into()];
        vocab.extend(chars.into_iter().map(String::from));
        Self::from_vocab(vocab).expect("fitted vocabulary is well formed")
    }

    pub fn from_vocab(vocab: Vec<String>) -> Result<Self> {
        if vocab.len() < 3 || vocab[0] != UNK_TOKEN || vocab[1] != BOS_TOKEN || vocab[2] != STOP_TOKEN {
            return Err(invalid("vocabulary must start with <unk>, <bos>, newline"));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            if i >= 3 && tok.chars().count() != 1 {
                return Err(invalid(format!("token {tok:?} is not a single character")));
            }
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(invalid(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { vocab, index })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.vocab
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Number of ids a model can emit: everything except BOS.
    pub fn outcome_count(&self) -> usize {
        self.vocab.len() - 1
    }

    pub fn outcomes(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.vocab.len() as u32).filter(|&id| id != BOS_ID)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut buf = [0u8; 4];
        normalize(text)
            .chars()
            .map(|c| {
                let s: &str = c.encode_utf8(&mut buf);
                self.index.get(s).copied().unwrap_or(UNK_ID)
            })
            .collect()
    }

    /// UNK decodes to U+FFFD and BOS to nothing.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            match id {
                UNK_ID => out.push('\u{fffd}'),
                BOS_ID => {}
                _ => out.push_str(self.token(id).unwrap_or("\u{fffd}")),
            }
        }
        out
    }
}

impl TryFrom<Vec<String>> for Tokenizer {
    type Error = crate::Error;

    fn try_from(vocab: Vec<String>) -> Result<Self> {
        Self::from_vocab(vocab)
    }
}

impl From<Tokenizer> for Vec<String> {
    fn from(t: Tokenizer) -> Self {
        t.vocab
    }
}
