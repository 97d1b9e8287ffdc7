//! Line-delimited JSON store format.
//!
//! One object per line:
//! `{"utterance_id": .., "identity_id": .., "label": "bonafide"|"spoof", "dataset": .., "embedding": [..]}`.
//! Values are written as the shortest decimal that reads back to the same f32.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingStore, Label, StoreError, UtteranceRecord, UNKNOWN_MODEL};

/// Wire form of one JSONL line as read from disk.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonlRecord {
    pub utterance_id: String,
    pub identity_id: String,
    pub label: Label,
    pub dataset: String,
    pub embedding: Vec<f64>,
}

#[derive(Serialize)]
struct JsonlRecordRef<'a> {
    utterance_id: &'a str,
    identity_id: &'a str,
    label: Label,
    dataset: &'a str,
    embedding: &'a [f32],
}

/// Reads a JSONL store. Line numbers in errors are 1-based; blank lines are skipped.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<EmbeddingStore, StoreError> {
    let reader = BufReader::new(File::open(path)?);
    read_jsonl_from(reader)
}

pub(crate) fn read_jsonl_from(reader: impl BufRead) -> Result<EmbeddingStore, StoreError> {
    let mut store = EmbeddingStore::new(UNKNOWN_MODEL);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonlRecord = serde_json::from_str(&line).map_err(|source| StoreError::Json {
            line: line_no,
            source,
        })?;
        let embedding = Embedding::from_f64(&raw.embedding).map_err(|source| StoreError::Line {
            line: line_no,
            source,
        })?;
        store
            .push(UtteranceRecord {
                utterance_id: raw.utterance_id,
                identity_id: raw.identity_id,
                label: raw.label,
                dataset: raw.dataset,
                embedding,
            })
            .map_err(|source| StoreError::Line {
                line: line_no,
                source,
            })?;
    }
    Ok(store)
}

pub fn write_jsonl(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_jsonl_to(store, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_jsonl_to(store: &EmbeddingStore, mut w: impl Write) -> Result<(), StoreError> {
    for r in store.records() {
        let line = JsonlRecordRef {
            utterance_id: &r.utterance_id,
            identity_id: &r.identity_id,
            label: r.label,
            dataset: &r.dataset,
            embedding: r.embedding.values(),
        };
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
