//! Versioned JSON model documents.
//!
//! ```json
//! {
//!   "version": 1,
//!   "feature_names": ["distance", ...],
//!   "mfs": [[{"center": 0.0, "width": 0.5}, ...], ...],
//!   "rules": [{"mf_indices": [0, 1, ...], "coeffs": [a0, a1, ...]}, ...],
//!   "label_encoding": {"war": 1.0, "peace": 0.0, "threshold": 0.5}
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use countermachine_core::{FuzzyError, ModelDocument, TrainReport, TskModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Malformed(#[from] FuzzyError),
}

pub fn to_json(model: &TskModel) -> String {
    let mut s = serde_json::to_string_pretty(&model.to_document())
        .expect("model documents always serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<TskModel, ModelFileError> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    Ok(TskModel::from_document(doc)?)
}

pub fn load(path: &Path) -> Result<TskModel, ModelFileError> {
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.to_owned(),
        source,
    })?;
    from_json(&text)
}

pub fn save(path: &Path, model: &TskModel) -> Result<(), ModelFileError> {
    fs::write(path, to_json(model)).map_err(|source| ModelFileError::Io {
        path: path.to_owned(),
        source,
    })
}

/// `{"loss": [...], "train_acc": r, "test_acc": r}`
pub fn report_json(report: &TrainReport) -> String {
    serde_json::to_string(report).expect("reports always serialize")
}
