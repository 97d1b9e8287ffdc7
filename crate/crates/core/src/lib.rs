//! Identity-based voice deepfake verification over pre-computed embeddings.
//!
//! A test utterance is compared with a reference set of certified genuine
//! utterances of the speaker it claims to be. The decision statistic is the
//! maximum cosine similarity to any reference; at or above a threshold the
//! utterance is accepted as real, otherwise flagged as fake.
//!
//! * [`store`]: embedding files (JSONL and binary) and reference pools
//! * [`similarity`]: cosine scoring, max statistic, verdicts, batch trials
//! * [`metrics`]: ROC, AUC, EER, minimum normalized detection cost, accuracy
//! * [`protocols`]: full evaluation and the reference-size / threshold sweeps
//! * [`fixture`]: seeded synthetic stores for hermetic experiments
//! * [`report`]: JSON/CSV report documents written by the CLI

pub mod fixture;
pub mod metrics;
pub mod protocols;
pub mod report;
pub mod similarity;
pub mod store;

pub use metrics::{ClassScores, CostModel, MetricsSummary};
pub use similarity::{Claim, Decision, DecisionStatistic, TrialScore, Verdict};
pub use store::{Embedding, EmbeddingStore, Label, ReferenceSet, UtteranceRecord};

/// Version string embedded in every report.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
