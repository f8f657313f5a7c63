use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named collection of documents with a free-form category tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub id: String,
    pub tag: String,
    documents: Vec<String>,
}

impl Corpus {
    /// Blank documents are dropped; at least one must remain.
    pub fn new(id: impl Into<String>, tag: impl Into<String>, documents: Vec<String>) -> Result<Self> {
        let id = id.into();
        let documents: Vec<String> =
            documents.into_iter().map(|d| d.trim().to_string()).filter(|d| !d.is_empty()).collect();
        if documents.is_empty() {
            return Err(Error::EmptyCorpus(id));
        }
        Ok(Self { id, tag: tag.into(), documents })
    }

    pub fn documents(&self) -> &[String] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Leading `fraction` of the documents, at least one.
    pub fn fraction(&self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("data fraction {fraction} outside (0, 1]")));
        }
        let n = ((self.documents.len() as f64 * fraction).ceil() as usize).max(1);
        Ok(Self {
            id: format!("{}@{fraction}", self.id),
            tag: self.tag.clone(),
            documents: self.documents[..n].to_vec(),
        })
    }

    /// One document per line, blank lines ignored.
    pub fn read(path: &Path, id: impl Into<String>, tag: impl Into<String>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::new(id, tag, text.lines().map(str::to_string).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        for d in &self.documents {
            writeln!(f, "{}", d.replace('\n', " "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus_names_its_id() {
        let err = Corpus::new("lyrics", "x", vec!["  ".into(), String::new()]).unwrap_err();
        assert!(err.to_string().contains("lyrics"));
    }

    #[test]
    fn file_round_trip_skips_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "one\n\n  \ntwo\n").unwrap();
        let c = Corpus::read(&p, "c", "t").unwrap();
        assert_eq!(c.documents(), &["one", "two"]);
        c.write(&p).unwrap();
        assert_eq!(Corpus::read(&p, "c", "t").unwrap(), c);
    }

    #[test]
    fn fraction_keeps_prefix() {
        let c = Corpus::new("c", "t", (0..8).map(|i| i.to_string()).collect()).unwrap();
        assert_eq!(c.fraction(0.25).unwrap().len(), 2);
        assert_eq!(c.fraction(1.0).unwrap().len(), 8);
        assert!(c.fraction(0.0).is_err());
    }
}
