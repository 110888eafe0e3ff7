//! Newline-delimited JSON manifests of claim/document records.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::FactifyLabel;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: empty id")]
    EmptyId { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    #[serde(default)]
    pub claim_text: String,
    #[serde(default)]
    pub document_text: String,
    #[serde(default)]
    pub claim_image: String,
    #[serde(default)]
    pub document_image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<FactifyLabel>,
}

impl ManifestRecord {
    pub fn new(id: impl Into<String>, category: Option<FactifyLabel>) -> Self {
        Self {
            id: id.into(),
            claim_text: String::new(),
            document_text: String::new(),
            claim_image: String::new(),
            document_image: String::new(),
            category,
        }
    }
}

/// Parses manifest text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, ManifestError> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(raw).map_err(|e| ManifestError::Malformed {
                line,
                message: e.to_string(),
            })?;
        if record.id.is_empty() {
            return Err(ManifestError::EmptyId { line });
        }
        if !seen.insert(record.id.clone()) {
            return Err(ManifestError::DuplicateId {
                line,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, ManifestError> {
    parse_manifest(&fs::read_to_string(path)?)
}

pub fn write_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> io::Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out)
}
