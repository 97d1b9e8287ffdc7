//! Utterance embeddings, their metadata, and the per-identity reference pools.
//!
//! A store is built once (from JSONL or the binary `PVE1` format) and is
//! read-only afterwards, so it can be shared freely across worker threads.

mod binary;
mod jsonl;

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binary::{
    is_binary, read_binary, write_binary, BinaryError, BinaryErrorKind, FORMAT_VERSION, MAGIC,
};
pub use jsonl::{read_jsonl, write_jsonl, JsonlRecord};

/// Model name used when the input format carries no provenance.
pub const UNKNOWN_MODEL: &str = "unknown";

/// Reads a store in either format, detected by the binary magic bytes.
pub fn read_store(path: impl AsRef<std::path::Path>) -> Result<EmbeddingStore, StoreError> {
    let bytes = std::fs::read(path)?;
    if is_binary(&bytes) {
        Ok(binary::decode(&bytes)?)
    } else {
        jsonl::read_jsonl_from(bytes.as_slice())
    }
}

/// Ground-truth class of an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "bonafide")]
    BonaFide,
    #[serde(rename = "spoof")]
    Spoof,
}

impl Label {
    pub fn is_bona_fide(self) -> bool {
        matches!(self, Label::BonaFide)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::BonaFide => "bonafide",
            Label::Spoof => "spoof",
        }
    }
}

/// Problems with a single record, independent of where it was read from.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("embedding is empty")]
    EmptyEmbedding,
    #[error("embedding value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("embedding is the zero vector")]
    ZeroVector,
    #[error("embedding has dim {found}, store has dim {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: RecordError,
    },
    #[error(transparent)]
    Binary(#[from] BinaryError),
    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),
    #[error("identity `{0}` has no bona-fide records")]
    NoBonaFide(String),
    #[error("cannot draw {k} references from a pool of {available}")]
    InvalidSubsample { k: usize, available: usize },
}

/// A validated embedding: non-empty, finite and non-zero.
///
/// The squared Euclidean norm is computed once (in f64) at construction and
/// reused by every similarity evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
    sq_norm: f64,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, RecordError> {
        if values.is_empty() {
            return Err(RecordError::EmptyEmbedding);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RecordError::NonFinite { index });
        }
        let sq: f64 = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
        if sq == 0.0 {
            return Err(RecordError::ZeroVector);
        }
        Ok(Self {
            values,
            sq_norm: sq,
        })
    }

    /// Builds an embedding from f64 input, rounding each value to f32 storage.
    pub fn from_f64(values: &[f64]) -> Result<Self, RecordError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RecordError::NonFinite { index });
        }
        let narrowed: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        // Values beyond f32 range overflow to infinity on narrowing.
        Self::new(narrowed)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm.sqrt()
    }

    pub fn squared_norm(&self) -> f64 {
        self.sq_norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub identity_id: String,
    pub label: Label,
    pub dataset: String,
    pub embedding: Embedding,
}

/// Per-identity pool statistics, as reported by `ingest`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IdentityCounts {
    pub bona_fide: usize,
    pub spoof: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    model_name: String,
    dim: Option<usize>,
    records: Vec<UtteranceRecord>,
    by_id: HashMap<String, usize>,
}

impl Default for EmbeddingStore {
    fn default() -> Self {
        Self::new(UNKNOWN_MODEL)
    }
}

impl EmbeddingStore {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            dim: None,
            records: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn with_model_name(mut self, model_name: impl Into<String>) -> Self {
        self.model_name = model_name.into();
        self
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    /// Embedding dimension; `None` until the first record is appended.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn push(&mut self, record: UtteranceRecord) -> Result<(), RecordError> {
        let found = record.embedding.dim();
        match self.dim {
            Some(expected) if expected != found => {
                return Err(RecordError::DimMismatch { expected, found })
            }
            _ => {}
        }
        if self.by_id.contains_key(&record.utterance_id) {
            return Err(RecordError::DuplicateId(record.utterance_id));
        }
        self.dim = Some(found);
        self.by_id
            .insert(record.utterance_id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn get(&self, utterance_id: &str) -> Option<&UtteranceRecord> {
        self.by_id.get(utterance_id).map(|&i| &self.records[i])
    }

    pub fn filter<'a>(
        &'a self,
        identity_id: &'a str,
        label: Label,
    ) -> impl Iterator<Item = &'a UtteranceRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.identity_id == identity_id && r.label == label)
    }

    /// Class counts per identity, ordered by identity id.
    pub fn identity_counts(&self) -> BTreeMap<&str, IdentityCounts> {
        let mut out: BTreeMap<&str, IdentityCounts> = BTreeMap::new();
        for r in &self.records {
            let c = out.entry(r.identity_id.as_str()).or_default();
            match r.label {
                Label::BonaFide => c.bona_fide += 1,
                Label::Spoof => c.spoof += 1,
            }
        }
        out
    }

    pub fn datasets(&self) -> Vec<&str> {
        let mut tags: Vec<&str> = self.records.iter().map(|r| r.dataset.as_str()).collect();
        tags.sort_unstable();
        tags.dedup();
        tags
    }

    /// A new store holding only the records of one dataset tag.
    pub fn restrict_to_dataset(&self, dataset: &str) -> EmbeddingStore {
        let mut out = EmbeddingStore::new(self.model_name.clone());
        for r in self.records.iter().filter(|r| r.dataset == dataset) {
            out.push(r.clone()).expect("subset of a valid store is valid");
        }
        out
    }

    /// The bona-fide pool of `identity`, ordered by utterance id.
    pub fn reference_set(&self, identity: &str) -> Result<ReferenceSet<'_>, StoreError> {
        let mut seen = false;
        let mut members = Vec::new();
        for r in self.records.iter().filter(|r| r.identity_id == identity) {
            seen = true;
            if r.label.is_bona_fide() {
                members.push(r);
            }
        }
        if !seen {
            return Err(StoreError::UnknownIdentity(identity.to_string()));
        }
        if members.is_empty() {
            return Err(StoreError::NoBonaFide(identity.to_string()));
        }
        members.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        Ok(ReferenceSet {
            identity: identity.to_string(),
            members,
        })
    }
}

/// Certified bona-fide utterances of one identity.
///
/// Members are borrowed from the owning store. A set returned by
/// [`EmbeddingStore::reference_set`] is sorted by utterance id, so every
/// derived subset depends only on the pool content, never on record order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet<'a> {
    identity: String,
    members: Vec<&'a UtteranceRecord>,
}

impl<'a> ReferenceSet<'a> {
    /// Builds a set from explicit members. Used for ad-hoc galleries and tests;
    /// an empty member list is allowed here and rejected at scoring time.
    pub fn from_members(identity: impl Into<String>, members: Vec<&'a UtteranceRecord>) -> Self {
        Self {
            identity: identity.into(),
            members,
        }
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    pub fn members(&self) -> &[&'a UtteranceRecord] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, utterance_id: &str) -> bool {
        self.members.iter().any(|m| m.utterance_id == utterance_id)
    }

    /// The same pool with one utterance removed (leave-one-out).
    pub fn without(&self, utterance_id: &str) -> ReferenceSet<'a> {
        ReferenceSet {
            identity: self.identity.clone(),
            members: self
                .members
                .iter()
                .copied()
                .filter(|m| m.utterance_id != utterance_id)
                .collect(),
        }
    }

    /// The members in a uniformly random order determined by `seed`.
    pub fn shuffled(&self, seed: u64) -> ReferenceSet<'a> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut members = self.members.clone();
        members.shuffle(&mut rng);
        ReferenceSet {
            identity: self.identity.clone(),
            members,
        }
    }

    /// The first `k` members in current order (or all of them if fewer).
    pub fn prefix(&self, k: usize) -> ReferenceSet<'a> {
        ReferenceSet {
            identity: self.identity.clone(),
            members: self.members.iter().take(k).copied().collect(),
        }
    }
}

/// Draws a uniformly random `k`-subset of `reference` without replacement.
///
/// The draw is a seeded shuffle followed by a `k`-prefix; the result is
/// returned in utterance-id order.
pub fn subsample_reference<'a>(
    reference: &ReferenceSet<'a>,
    k: usize,
    seed: u64,
) -> Result<ReferenceSet<'a>, StoreError> {
    if k == 0 || k > reference.len() {
        return Err(StoreError::InvalidSubsample {
            k,
            available: reference.len(),
        });
    }
    let mut out = reference.shuffled(seed).prefix(k);
    out.members
        .sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    Ok(out)
}
