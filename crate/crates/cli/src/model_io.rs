//! JSON model files.
//!
//! HMM: `{"K": 2, "V": 3, "pi": [..], "A": [[..]], "E": [[..]]}`, row-major.
//! Scripted: `{"records": [{"step": 0, "pos": 3, "probs": [..]}], "default_probs": [..]}`.

use std::fs;
use std::path::{Path, PathBuf};

use depcap_core::denoiser::{HmmModel, ScriptedModel};
use depcap_core::Dist;
use serde::{Deserialize, Serialize};

/// Rows of a model file may be off by this much before renormalization.
pub const FILE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: depcap_core::Error },
    #[error("{path}: declared {field} = {declared} but the arrays imply {actual}")]
    DeclaredSize {
        path: PathBuf,
        field: &'static str,
        declared: usize,
        actual: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmmFile {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "V")]
    pub v: usize,
    pub pi: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
}

impl HmmFile {
    pub fn from_model(model: &HmmModel) -> Self {
        let k = model.states();
        Self {
            k,
            v: model.vocab_size(),
            pi: model.initial().to_vec(),
            a: (0..k).map(|i| model.transition_row(i).to_vec()).collect(),
            e: (0..k).map(|i| model.emission_row(i).to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRecord {
    pub step: usize,
    pub pos: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    pub records: Vec<ScriptRecord>,
    pub default_probs: Vec<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ModelFileError> {
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ModelFileError::Parse {
        path: path.to_owned(),
        source,
    })
}

pub fn parse_hmm(file: HmmFile, path: &Path) -> Result<HmmModel, ModelFileError> {
    let invalid = |source| ModelFileError::Invalid {
        path: path.to_owned(),
        source,
    };
    let HmmFile { k, v, pi, a, e } = file;
    if pi.len() != k {
        return Err(ModelFileError::DeclaredSize {
            path: path.to_owned(),
            field: "K",
            declared: k,
            actual: pi.len(),
        });
    }
    if let Some(row) = e.iter().find(|row| row.len() != v) {
        return Err(ModelFileError::DeclaredSize {
            path: path.to_owned(),
            field: "V",
            declared: v,
            actual: row.len(),
        });
    }
    HmmModel::with_tolerance(pi, a, e, FILE_TOLERANCE).map_err(invalid)
}

pub fn load_hmm(path: &Path) -> Result<HmmModel, ModelFileError> {
    parse_hmm(read_json(path)?, path)
}

fn checked_dist(probs: Vec<f64>, path: &Path) -> Result<Dist, ModelFileError> {
    let invalid = |source| ModelFileError::Invalid {
        path: path.to_owned(),
        source,
    };
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > FILE_TOLERANCE {
        return Err(invalid(depcap_core::Error::InvalidDist("probabilities must sum to 1")));
    }
    Dist::from_weights(probs).map_err(invalid)
}

pub fn load_scripted(path: &Path) -> Result<ScriptedModel, ModelFileError> {
    let file: ScriptFile = read_json(path)?;
    let mut model = ScriptedModel::new(checked_dist(file.default_probs, path)?);
    for rec in file.records {
        let dist = checked_dist(rec.probs, path)?;
        model
            .insert(rec.step, rec.pos, dist)
            .map_err(|source| ModelFileError::Invalid {
                path: path.to_owned(),
                source,
            })?;
    }
    Ok(model)
}
