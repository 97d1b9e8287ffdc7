//! Experiment protocols: full evaluation, reference-size sweep, score
//! histograms and accuracy-vs-threshold sweep.
//!
//! Every trial scores an utterance against its own identity's bona-fide
//! pool, holding bona-fide test utterances out of their own pool.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{self, ClassScores, CostModel, MetricsError, MetricsSummary};
use crate::similarity::{
    is_self_trial, max_similarity, score_against, Claim, TrialError, TrialScore, DEFAULT_THRESHOLD,
};
use crate::store::{EmbeddingStore, ReferenceSet, StoreError};

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_GRID_POINTS: usize = 201;
/// Largest accuracy gap to the optimum at which the fixed threshold counts as adequate.
pub const FIXED_THRESHOLD_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("trial `{utterance_id}`: {source}")]
    Trial {
        utterance_id: String,
        #[source]
        source: TrialError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("store is empty")]
    EmptyStore,
    #[error("invalid reference sizes: {0}")]
    InvalidSizes(String),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("bins must be at least 1")]
    NoBins,
    #[error("invalid threshold grid: {0}")]
    InvalidGrid(String),
}

/// One claim per record, each against the record's own identity.
pub fn self_claims(store: &EmbeddingStore) -> Vec<Claim> {
    store
        .records()
        .iter()
        .map(|r| Claim::new(r.utterance_id.clone(), r.identity_id.clone()))
        .collect()
}

/// Scores every utterance against its own identity with full pools; any
/// failing trial aborts the run.
pub fn self_trials(store: &EmbeddingStore) -> Result<Vec<TrialScore>, ProtocolError> {
    if store.is_empty() {
        return Err(ProtocolError::EmptyStore);
    }
    let claims = self_claims(store);
    crate::similarity::score_trials(store, &claims)
        .into_iter()
        .zip(&claims)
        .map(|(res, claim)| {
            res.map_err(|source| ProtocolError::Trial {
                utterance_id: claim.utterance_id.clone(),
                source,
            })
        })
        .collect()
}

/// Groups trials by the dataset tag of their test utterance.
pub fn group_by_dataset(
    store: &EmbeddingStore,
    trials: Vec<TrialScore>,
) -> BTreeMap<String, Vec<TrialScore>> {
    let mut out: BTreeMap<String, Vec<TrialScore>> = BTreeMap::new();
    for t in trials {
        let tag = store
            .get(&t.utterance_id)
            .map(|r| r.dataset.clone())
            .unwrap_or_default();
        out.entry(tag).or_default().push(t);
    }
    out
}

pub fn evaluate(store: &EmbeddingStore, cost: &CostModel) -> Result<MetricsSummary, ProtocolError> {
    let trials = self_trials(store)?;
    Ok(metrics::summarize(&group_by_dataset(store, trials), cost)?)
}

/// Seed for one identity's pool permutation in one sweep cell.
pub fn cell_seed(seed: u64, size: usize, repetition: usize, identity: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update((size as u64).to_le_bytes())
        .chain_update((repetition as u64).to_le_bytes())
        .chain_update(identity.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

/// Self-trials with each identity's pool reduced to at most `size` references.
///
/// Per identity the pool is shuffled with [`cell_seed`]; a trial uses the first
/// `size` members of that order, skipping its own utterance. This is a uniform
/// draw of `min(size, available)` references from the held-out pool.
pub fn sized_trials(
    store: &EmbeddingStore,
    size: usize,
    seed: u64,
    repetition: usize,
) -> Result<Vec<TrialScore>, ProtocolError> {
    if store.is_empty() {
        return Err(ProtocolError::EmptyStore);
    }
    if size == 0 {
        return Err(ProtocolError::InvalidSizes("size 0".into()));
    }
    let mut shuffled: HashMap<&str, ReferenceSet<'_>> = HashMap::new();
    for r in store.records() {
        if !shuffled.contains_key(r.identity_id.as_str()) {
            let pool = store.reference_set(&r.identity_id)?;
            let order = pool.shuffled(cell_seed(seed, size, repetition, &r.identity_id));
            shuffled.insert(r.identity_id.as_str(), order);
        }
    }
    store
        .records()
        .par_iter()
        .map(|test| {
            let order = &shuffled[test.identity_id.as_str()];
            let stat = if is_self_trial(test.label, &test.identity_id, order.identity()) {
                let members: Vec<_> = order
                    .members()
                    .iter()
                    .copied()
                    .filter(|m| m.utterance_id != test.utterance_id)
                    .take(size)
                    .collect();
                let refs = ReferenceSet::from_members(order.identity(), members);
                if refs.is_empty() {
                    Err(TrialError::LeaveOneOutEmpty {
                        utterance_id: test.utterance_id.clone(),
                        identity: test.identity_id.clone(),
                    })
                } else {
                    max_similarity(&test.embedding, &refs).map_err(TrialError::from)
                }
            } else {
                score_against(test, &order.prefix(size))
            };
            let stat = stat.map_err(|source| ProtocolError::Trial {
                utterance_id: test.utterance_id.clone(),
                source,
            })?;
            Ok(TrialScore {
                utterance_id: test.utterance_id.clone(),
                claimed_identity: test.identity_id.clone(),
                score: stat.value,
                argmax_reference: stat.argmax_reference,
                label: test.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub size: usize,
    pub mean_auc: f64,
    /// Population standard deviation over repetitions.
    pub std_auc: f64,
    pub min_auc: f64,
    pub max_auc: f64,
    pub aucs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

pub fn validate_sizes(sizes: &[usize]) -> Result<(), ProtocolError> {
    if sizes.is_empty() {
        return Err(ProtocolError::InvalidSizes("no sizes given".into()));
    }
    if sizes[0] == 0 {
        return Err(ProtocolError::InvalidSizes("sizes must be >= 1".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ProtocolError::InvalidSizes(
            "sizes must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// AUC as a function of reference-set size, averaged over seeded repetitions.
pub fn reference_sweep(
    store: &EmbeddingStore,
    sizes: &[usize],
    repetitions: usize,
    seed: u64,
) -> Result<SweepResult, ProtocolError> {
    validate_sizes(sizes)?;
    if repetitions == 0 {
        return Err(ProtocolError::NoRepetitions);
    }
    let cells: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&k| (0..repetitions).map(move |r| (k, r)))
        .collect();
    let aucs = cells
        .par_iter()
        .map(|&(k, r)| {
            let trials = sized_trials(store, k, seed, r)?;
            Ok(metrics::auc(&ClassScores::from_trials(&trials)?))
        })
        .collect::<Result<Vec<f64>, ProtocolError>>()?;

    let points = sizes
        .iter()
        .zip(aucs.chunks(repetitions))
        .map(|(&size, aucs)| {
            let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
            SweepPoint {
                size,
                mean_auc: mean,
                std_auc: metrics::population_std(aucs),
                min_auc: aucs.iter().copied().fold(f64::INFINITY, f64::min),
                max_auc: aucs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                aucs: aucs.to_vec(),
            }
        })
        .collect();
    Ok(SweepResult {
        sizes: sizes.to_vec(),
        repetitions,
        seed,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreHistogram {
    /// `bins + 1` uniform edges over [-1, 1]. Bins are right-open except the last.
    pub bin_edges: Vec<f64>,
    pub real_counts: Vec<u64>,
    pub fake_counts: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_size: Option<usize>,
    pub n_real: u64,
    pub n_fake: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub real_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fake_mean: Option<f64>,
    /// Shared area of the two normalized histograms; needs both classes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
}

pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    edges[bins] = hi;
    edges
}

/// Per-class histograms of trial scores over [-1, 1].
pub fn histogram(
    trials: &[TrialScore],
    bins: usize,
    reference_size: Option<usize>,
) -> Result<ScoreHistogram, ProtocolError> {
    if bins == 0 {
        return Err(ProtocolError::NoBins);
    }
    let edges = uniform_edges(-1.0, 1.0, bins);
    let inner = &edges[1..bins];
    let mut real_counts = vec![0u64; bins];
    let mut fake_counts = vec![0u64; bins];
    let (mut real_sum, mut fake_sum) = (0.0, 0.0);
    for t in trials {
        // number of inner edges <= score; out-of-range scores land in the end bins
        let bin = inner.partition_point(|&e| e <= t.score);
        if t.label.is_bona_fide() {
            real_counts[bin] += 1;
            real_sum += t.score;
        } else {
            fake_counts[bin] += 1;
            fake_sum += t.score;
        }
    }
    let n_real: u64 = real_counts.iter().sum();
    let n_fake: u64 = fake_counts.iter().sum();
    let overlap = (n_real > 0 && n_fake > 0).then(|| {
        real_counts
            .iter()
            .zip(&fake_counts)
            .map(|(&r, &f)| (r as f64 / n_real as f64).min(f as f64 / n_fake as f64))
            .sum::<f64>()
    });
    Ok(ScoreHistogram {
        bin_edges: edges,
        real_counts,
        fake_counts,
        reference_size,
        n_real,
        n_fake,
        real_mean: (n_real > 0).then(|| real_sum / n_real as f64),
        fake_mean: (n_fake > 0).then(|| fake_sum / n_fake as f64),
        overlap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdAccuracy {
    pub threshold: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSweep {
    pub points: Vec<ThresholdAccuracy>,
    /// Lowest grid threshold reaching the best accuracy.
    pub best: ThresholdAccuracy,
    pub fixed: ThresholdAccuracy,
    /// Whether the fixed threshold is within `FIXED_THRESHOLD_TOLERANCE` of the best accuracy.
    pub fixed_within_tolerance: bool,
}

/// `points` uniform thresholds over [0, 1], or [-1, 1] with `full_range`.
pub fn default_grid(full_range: bool, points: usize) -> Vec<f64> {
    let lo = if full_range { -1.0 } else { 0.0 };
    if points == 1 {
        return vec![lo];
    }
    uniform_edges(lo, 1.0, points - 1)
}

pub fn threshold_sweep(
    trials: &[TrialScore],
    grid: &[f64],
) -> Result<ThresholdSweep, ProtocolError> {
    if grid.is_empty() {
        return Err(ProtocolError::InvalidGrid("empty".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(ProtocolError::InvalidGrid("non-finite threshold".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(ProtocolError::InvalidGrid("not sorted".into()));
    }
    let points = grid
        .iter()
        .map(|&threshold| {
            Ok(ThresholdAccuracy {
                threshold,
                accuracy: metrics::accuracy_at(trials, threshold)?,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let best = *points
        .iter()
        .reduce(|best, p| if p.accuracy > best.accuracy { p } else { best })
        .expect("grid is non-empty");
    let fixed = ThresholdAccuracy {
        threshold: DEFAULT_THRESHOLD,
        accuracy: metrics::accuracy_at(trials, DEFAULT_THRESHOLD)?,
    };
    Ok(ThresholdSweep {
        fixed_within_tolerance: best.accuracy - fixed.accuracy <= FIXED_THRESHOLD_TOLERANCE,
        points,
        best,
        fixed,
    })
}
