use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::logistic::{BinaryAttributor, TrainingMeta};
use super::result::AttributionResult;
use super::triplet::{Projection, TripletAttributor, TripletConfig};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const ATTRIBUTOR_FORMAT_VERSION: u32 = 1;

/// Little-endian f64s, base64-encoded.
pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{} bytes is not a whole number of f64 values", bytes.len()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinaryFile {
    format_version: u32,
    kind: String,
    base_id: String,
    weights: String,
    bias: f64,
    training_meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectionFile {
    in_dim: usize,
    out_dim: usize,
    weights: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceFile {
    label: String,
    indices: Vec<u32>,
    values: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripletFile {
    format_version: u32,
    kind: String,
    config: TripletConfig,
    projection: Option<ProjectionFile>,
    references: Vec<ReferenceFile>,
    loss_history: Vec<f64>,
}

fn format_err(path: &str, message: impl Into<String>) -> Error {
    Error::Format { path: path.into(), message: message.into() }
}

fn check_header(version: u32, kind: &str, expected: &str) -> Result<()> {
    if version != ATTRIBUTOR_FORMAT_VERSION {
        return Err(format_err("<attributor>", format!("unsupported format_version {version}")));
    }
    if kind != expected {
        return Err(format_err("<attributor>", format!("expected kind `{expected}`, found `{kind}`")));
    }
    Ok(())
}

impl BinaryAttributor {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&BinaryFile {
            format_version: ATTRIBUTOR_FORMAT_VERSION,
            kind: "binary".into(),
            base_id: self.base_id.clone(),
            weights: encode_f64s(&self.weights),
            bias: self.bias,
            training_meta: self.meta.clone(),
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let f: BinaryFile = serde_json::from_str(json)?;
        check_header(f.format_version, &f.kind, "binary")?;
        let weights = decode_f64s(&f.weights).map_err(|m| format_err("<attributor>", m))?;
        if weights.len() != f.training_meta.embed.dim {
            return Err(format_err(
                "<attributor>",
                format!("{} weights for embedding dim {}", weights.len(), f.training_meta.embed.dim),
            ));
        }
        Ok(Self { base_id: f.base_id, weights, bias: f.bias, meta: f.training_meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?).map_err(|e| relabel(e, path))
    }
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { message, .. } => Error::Format { path: path.display().to_string(), message },
        Error::Json(j) => Error::Format { path: path.display().to_string(), message: j.to_string() },
        other => other,
    }
}

impl TripletAttributor {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&TripletFile {
            format_version: ATTRIBUTOR_FORMAT_VERSION,
            kind: "triplet".into(),
            config: self.config,
            projection: self.projection.as_ref().map(|p| ProjectionFile {
                in_dim: p.in_dim,
                out_dim: p.out_dim,
                weights: encode_f64s(&p.weights),
            }),
            references: self
                .references
                .iter()
                .map(|(v, label)| ReferenceFile {
                    label: label.clone(),
                    indices: v.entries().iter().map(|e| e.0).collect(),
                    values: encode_f64s(&v.entries().iter().map(|e| e.1).collect::<Vec<_>>()),
                })
                .collect(),
            loss_history: self.loss_history.clone(),
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let f: TripletFile = serde_json::from_str(json)?;
        check_header(f.format_version, &f.kind, "triplet")?;
        let dim = f.config.embed.dim;
        let projection = match f.projection {
            Some(p) => {
                let weights = decode_f64s(&p.weights).map_err(|m| format_err("<attributor>", m))?;
                if weights.len() != p.in_dim * p.out_dim || p.in_dim != dim {
                    return Err(format_err("<attributor>", "projection shape does not match its weights"));
                }
                Some(Projection { in_dim: p.in_dim, out_dim: p.out_dim, weights })
            }
            None => None,
        };
        let references = f
            .references
            .into_iter()
            .map(|r| {
                let values = decode_f64s(&r.values).map_err(|m| format_err("<attributor>", m))?;
                if values.len() != r.indices.len() || r.indices.iter().any(|&i| i as usize >= dim) {
                    return Err(format_err("<attributor>", format!("malformed reference for `{}`", r.label)));
                }
                if r.indices.windows(2).any(|w| w[0] >= w[1]) || values.contains(&0.0) {
                    return Err(format_err("<attributor>", format!("unsorted reference for `{}`", r.label)));
                }
                let v = FeatureVector::from_entries(dim, r.indices.into_iter().zip(values).collect(), true);
                Ok((v, r.label))
            })
            .collect::<Result<_>>()?;
        Ok(Self { config: f.config, projection, references, loss_history: f.loss_history })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?).map_err(|e| relabel(e, path))
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    method: &'a str,
    direction: super::Direction,
    predicted: &'a std::collections::BTreeMap<String, String>,
    ties: &'a std::collections::BTreeSet<String>,
    unattributable: &'a std::collections::BTreeSet<String>,
}

impl AttributionResult {
    /// Rows are tested models, columns are bases.
    pub fn write_matrix_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["model_id".to_string()];
        header.extend(self.bases.iter().cloned());
        w.write_record(&header)?;
        for (target, row) in &self.scores {
            let mut rec = vec![target.clone()];
            rec.extend(self.bases.iter().map(|b| row.get(b).map(|v| format!("{v}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Summary {
            method: &self.method,
            direction: self.direction,
            predicted: &self.predicted,
            ties: &self.ties,
            unattributable: &self.unattributable,
        })?)
    }
}
