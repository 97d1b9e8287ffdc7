//! Cosine scoring, the max-over-references decision statistic, and verdicts.
//!
//! All accumulation is done in f64 with a fixed left-to-right order, so a
//! score is bit-identical no matter which thread computes it.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{Embedding, EmbeddingStore, Label, ReferenceSet, StoreError};

/// Default acceptance threshold for the max-similarity statistic.
pub const DEFAULT_THRESHOLD: f64 = 0.85;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("reference set for `{0}` is empty")]
    EmptyReference(String),
}

/// Cosine similarity in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionStatistic {
    pub value: f64,
    pub argmax_reference: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Real,
    Fake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub statistic: DecisionStatistic,
    pub threshold: f64,
}

/// Inner product with four interleaved f64 lanes combined as `(l0 + l1) + (l2 + l3)`.
///
/// The reduction order depends only on the length, and `x * y == y * x`, so
/// `dot(a, b)` and `dot(b, a)` are bitwise equal.
fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            lanes[l] += f64::from(x[l]) * f64::from(y[l]);
        }
    }
    for (l, (&x, &y)) in ra.iter().zip(rb).enumerate() {
        lanes[l] += f64::from(x) * f64::from(y);
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<SimilarityScore, SimilarityError> {
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    // sqrt(x * x) == x exactly, so identical vectors score exactly 1
    let raw = dot(a.values(), b.values()) / (a.squared_norm() * b.squared_norm()).sqrt();
    Ok(SimilarityScore(raw.clamp(-1.0, 1.0)))
}

/// Maximum cosine similarity between `test` and the members of `reference`.
///
/// Ties on the maximum report the smallest utterance id.
pub fn max_similarity(
    test: &Embedding,
    reference: &ReferenceSet<'_>,
) -> Result<DecisionStatistic, SimilarityError> {
    let mut best: Option<(f64, &str)> = None;
    for member in reference.members() {
        let s = cosine_similarity(test, &member.embedding)?.value();
        let id = member.utterance_id.as_str();
        best = match best {
            Some((v, arg)) if v > s || (v == s && arg <= id) => Some((v, arg)),
            _ => Some((s, id)),
        };
    }
    let (value, arg) =
        best.ok_or_else(|| SimilarityError::EmptyReference(reference.identity().to_string()))?;
    Ok(DecisionStatistic {
        value,
        argmax_reference: arg.to_string(),
    })
}

/// Accepts as real when the statistic reaches the threshold (boundary counts as real).
pub fn decide(statistic: DecisionStatistic, threshold: f64) -> Verdict {
    debug_assert!(threshold.is_finite());
    let decision = if statistic.value >= threshold {
        Decision::Real
    } else {
        Decision::Fake
    };
    Verdict {
        decision,
        statistic,
        threshold,
    }
}

/// A test utterance and the identity it claims to be.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub utterance_id: String,
    pub claimed_identity: String,
}

impl Claim {
    pub fn new(utterance_id: impl Into<String>, claimed_identity: impl Into<String>) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            claimed_identity: claimed_identity.into(),
        }
    }
}

/// One scored trial, also the JSONL line format of trial dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub utterance_id: String,
    pub claimed_identity: String,
    pub score: f64,
    pub argmax_reference: String,
    pub label: Label,
}

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("unknown utterance `{0}`")]
    UnknownUtterance(String),
    #[error(transparent)]
    Reference(#[from] StoreError),
    #[error("leave-one-out leaves no references for `{utterance_id}` in identity `{identity}`")]
    LeaveOneOutEmpty {
        utterance_id: String,
        identity: String,
    },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// True when `test` is a bona-fide utterance of `identity` and must be held out
/// of that identity's reference pool.
pub fn is_self_trial(test_label: Label, test_identity: &str, identity: &str) -> bool {
    test_label.is_bona_fide() && test_identity == identity
}

/// Scores `test` against `reference`, holding the test utterance out of the
/// pool when it is a bona-fide member of it.
pub fn score_against<'a>(
    test: &crate::store::UtteranceRecord,
    reference: &ReferenceSet<'a>,
) -> Result<DecisionStatistic, TrialError> {
    if is_self_trial(test.label, &test.identity_id, reference.identity())
        && reference.contains(&test.utterance_id)
    {
        let held_out = reference.without(&test.utterance_id);
        if held_out.is_empty() {
            return Err(TrialError::LeaveOneOutEmpty {
                utterance_id: test.utterance_id.clone(),
                identity: reference.identity().to_string(),
            });
        }
        return Ok(max_similarity(&test.embedding, &held_out)?);
    }
    Ok(max_similarity(&test.embedding, reference)?)
}

/// Scores a batch of claims in parallel. Output order matches input order, and
/// a failing claim yields an error entry without stopping the batch.
pub fn score_trials(
    store: &EmbeddingStore,
    claims: &[Claim],
) -> Vec<Result<TrialScore, TrialError>> {
    let mut pools: HashMap<&str, Option<ReferenceSet<'_>>> = HashMap::new();
    for c in claims {
        pools
            .entry(c.claimed_identity.as_str())
            .or_insert_with(|| store.reference_set(&c.claimed_identity).ok());
    }

    claims
        .par_iter()
        .map(|claim| {
            let test = store
                .get(&claim.utterance_id)
                .ok_or_else(|| TrialError::UnknownUtterance(claim.utterance_id.clone()))?;
            let pool = match &pools[claim.claimed_identity.as_str()] {
                Some(pool) => pool,
                // re-derive for the specific cause
                None => return Err(store.reference_set(&claim.claimed_identity).unwrap_err().into()),
            };
            let stat = score_against(test, pool)?;
            Ok(TrialScore {
                utterance_id: test.utterance_id.clone(),
                claimed_identity: claim.claimed_identity.clone(),
                score: stat.value,
                argmax_reference: stat.argmax_reference,
                label: test.label,
            })
        })
        .collect()
}
