//! Exact evaluation metrics over scored trials: ROC, AUC, EER, minimum
//! normalized detection cost, and accuracy.
//!
//! Empirical error curves are step functions of the threshold, so every
//! minimization runs over the distinct observed scores plus the two
//! sentinels `-inf` and `+inf`; there is no grid. A trial is accepted as
//! real when `score >= threshold`, hence
//!
//! * `FAR(t) = #{fake : score >= t} / n_fake`
//! * `FRR(t) = #{real : score <  t} / n_real`

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::similarity::TrialScore;
use crate::store::Label;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("both classes are required (got {n_real} real, {n_fake} fake trials)")]
    SingleClass { n_real: usize, n_fake: usize },
    #[error("score is not finite")]
    NonFiniteScore,
    #[error("invalid cost model: {0}")]
    InvalidCostModel(String),
    #[error("no trials")]
    Empty,
    #[error("no datasets to summarize")]
    NoDatasets,
}

/// Writes infinite thresholds as the strings `"-inf"` / `"inf"` so they survive JSON.
pub fn serialize_threshold<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
    if t.is_finite() {
        s.serialize_f64(*t)
    } else if *t > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Scores split by class, each sorted ascending.
///
/// Sorting makes every metric a function of the two score multisets only,
/// independent of trial order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    real: Vec<f64>,
    fake: Vec<f64>,
}

impl ClassScores {
    pub fn new(mut real: Vec<f64>, mut fake: Vec<f64>) -> Result<Self, MetricsError> {
        if real.iter().chain(&fake).any(|s| !s.is_finite()) {
            return Err(MetricsError::NonFiniteScore);
        }
        if real.is_empty() || fake.is_empty() {
            return Err(MetricsError::SingleClass {
                n_real: real.len(),
                n_fake: fake.len(),
            });
        }
        real.sort_by(f64::total_cmp);
        fake.sort_by(f64::total_cmp);
        Ok(Self { real, fake })
    }

    pub fn from_trials(trials: &[TrialScore]) -> Result<Self, MetricsError> {
        let (real, fake): (Vec<&TrialScore>, Vec<&TrialScore>) =
            trials.iter().partition(|t| t.label == Label::BonaFide);
        Self::new(
            real.iter().map(|t| t.score).collect(),
            fake.iter().map(|t| t.score).collect(),
        )
    }

    pub fn real(&self) -> &[f64] {
        &self.real
    }

    pub fn fake(&self) -> &[f64] {
        &self.fake
    }

    pub fn n_real(&self) -> usize {
        self.real.len()
    }

    pub fn n_fake(&self) -> usize {
        self.fake.len()
    }

    /// `-inf`, every distinct score ascending, `+inf`.
    pub fn candidate_thresholds(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.real.iter().chain(&self.fake).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        let mut out = Vec::with_capacity(all.len() + 2);
        out.push(f64::NEG_INFINITY);
        out.extend(all);
        out.push(f64::INFINITY);
        out
    }

    fn false_accepts(&self, threshold: f64) -> usize {
        self.fake.len() - self.fake.partition_point(|&s| s < threshold)
    }

    fn false_rejects(&self, threshold: f64) -> usize {
        self.real.partition_point(|&s| s < threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    #[serde(serialize_with = "serialize_threshold")]
    pub threshold: f64,
    pub false_accepts: usize,
    pub false_rejects: usize,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_real: usize,
    pub n_fake: usize,
}

impl RocCurve {
    /// Error rates at an arbitrary threshold (step-function lookup).
    pub fn rates_at(&self, threshold: f64) -> (f64, f64) {
        // rates are constant on (t_i, t_{i+1}], so take the first point at or above
        let i = self.points.partition_point(|p| p.threshold < threshold);
        let p = &self.points[i.min(self.points.len() - 1)];
        (p.far, p.frr)
    }
}

pub fn roc(scores: &ClassScores) -> RocCurve {
    let n_real = scores.n_real();
    let n_fake = scores.n_fake();
    let points = scores
        .candidate_thresholds()
        .into_iter()
        .map(|threshold| {
            let fa = scores.false_accepts(threshold);
            let fr = scores.false_rejects(threshold);
            RocPoint {
                threshold,
                false_accepts: fa,
                false_rejects: fr,
                far: fa as f64 / n_fake as f64,
                frr: fr as f64 / n_real as f64,
            }
        })
        .collect();
    RocCurve {
        points,
        n_real,
        n_fake,
    }
}

/// Twice the Mann-Whitney U statistic of the real class, from doubled mid-ranks.
///
/// Integer-valued: `2U = 2 * #{real > fake} + #{real == fake}`.
pub fn mann_whitney_u2(scores: &ClassScores) -> u64 {
    let (real, fake) = (scores.real(), scores.fake());
    let (mut i, mut j) = (0usize, 0usize);
    let mut position = 0u64; // 1-based rank of the next element minus one
    let mut doubled_rank_sum = 0u64;
    while i < real.len() || j < fake.len() {
        let v = match (real.get(i), fake.get(j)) {
            (Some(&r), Some(&f)) => {
                if r.total_cmp(&f).is_le() {
                    r
                } else {
                    f
                }
            }
            (Some(&r), None) => r,
            (None, Some(&f)) => f,
            (None, None) => unreachable!(),
        };
        let real_run = real[i..].iter().take_while(|&&s| s == v).count() as u64;
        let fake_run = fake[j..].iter().take_while(|&&s| s == v).count() as u64;
        let run = real_run + fake_run;
        // tie group occupies ranks position+1 ..= position+run
        let doubled_mid_rank = 2 * position + run + 1;
        doubled_rank_sum += real_run * doubled_mid_rank;
        position += run;
        i += real_run as usize;
        j += fake_run as usize;
    }
    let n = real.len() as u64;
    doubled_rank_sum - n * (n + 1)
}

/// Area under the ROC curve, equal to `P(real > fake) + P(real == fake) / 2`.
pub fn auc(scores: &ClassScores) -> f64 {
    let u2 = mann_whitney_u2(scores);
    u2 as f64 / (2 * scores.n_real() as u64 * scores.n_fake() as u64) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EerPoint {
    pub eer: f64,
    #[serde(serialize_with = "serialize_threshold")]
    pub threshold: f64,
}

/// Equal error rate: `(FAR + FRR) / 2` at the threshold minimizing `|FAR - FRR|`.
///
/// The gap is compared exactly in integer arithmetic; among equally good
/// thresholds the lowest wins.
pub fn eer(scores: &ClassScores) -> EerPoint {
    let curve = roc(scores);
    let (n_real, n_fake) = (curve.n_real as u128, curve.n_fake as u128);
    let gap = |p: &RocPoint| (p.false_accepts as u128 * n_real).abs_diff(p.false_rejects as u128 * n_fake);
    let best = curve
        .points
        .iter()
        .reduce(|best, p| if gap(p) < gap(best) { p } else { best })
        .expect("curve has sentinel points");
    EerPoint {
        eer: (best.far + best.frr) / 2.0,
        threshold: best.threshold,
    }
}

/// Costs and priors of the detection cost function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub c_miss: f64,
    pub c_fa: f64,
    pub p_target: f64,
    pub p_spoof: f64,
}

impl Default for CostModel {
    /// Community-convention defaults (`c_miss = 1`, `c_fa = 10`, `p_target = 0.95`).
    fn default() -> Self {
        Self {
            c_miss: 1.0,
            c_fa: 10.0,
            p_target: 0.95,
            p_spoof: 0.05,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |m: String| Err(MetricsError::InvalidCostModel(m));
        if !(self.c_miss.is_finite() && self.c_miss >= 0.0) {
            return bad(format!("c_miss must be finite and >= 0, got {}", self.c_miss));
        }
        if !(self.c_fa.is_finite() && self.c_fa >= 0.0) {
            return bad(format!("c_fa must be finite and >= 0, got {}", self.c_fa));
        }
        for (name, p) in [("p_target", self.p_target), ("p_spoof", self.p_spoof)] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {p}"));
            }
        }
        if (self.p_target + self.p_spoof - 1.0).abs() > 1e-9 {
            return bad(format!(
                "p_target + p_spoof must equal 1, got {}",
                self.p_target + self.p_spoof
            ));
        }
        if self.normalizer() <= 0.0 {
            return bad("normalizer min(c_miss*p_target, c_fa*p_spoof) is zero".into());
        }
        Ok(())
    }

    /// Cost of the better of the two trivial policies (accept all / reject all).
    pub fn normalizer(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * self.p_spoof)
    }

    /// Normalized cost at the given error rates.
    pub fn cost(&self, far: f64, frr: f64) -> f64 {
        (self.c_miss * self.p_target * frr + self.c_fa * self.p_spoof * far) / self.normalizer()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TdcfPoint {
    pub min_tdcf: f64,
    #[serde(serialize_with = "serialize_threshold")]
    pub threshold: f64,
}

/// Minimum normalized detection cost over all thresholds (lowest threshold on ties).
pub fn min_tdcf(scores: &ClassScores, cost: &CostModel) -> Result<TdcfPoint, MetricsError> {
    cost.validate()?;
    let curve = roc(scores);
    let mut best = TdcfPoint {
        min_tdcf: f64::INFINITY,
        threshold: f64::NAN,
    };
    for p in &curve.points {
        let c = cost.cost(p.far, p.frr);
        if c < best.min_tdcf {
            best = TdcfPoint {
                min_tdcf: c,
                threshold: p.threshold,
            };
        }
    }
    Ok(best)
}

/// Fraction of trials whose verdict at `threshold` matches the ground truth.
pub fn accuracy_at(trials: &[TrialScore], threshold: f64) -> Result<f64, MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = trials
        .iter()
        .filter(|t| (t.score >= threshold) == t.label.is_bona_fide())
        .count();
    Ok(correct as f64 / trials.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetMetrics {
    pub dataset: String,
    pub eer: f64,
    #[serde(serialize_with = "serialize_threshold")]
    pub eer_threshold: f64,
    pub min_tdcf: f64,
    #[serde(serialize_with = "serialize_threshold")]
    pub tdcf_threshold: f64,
    pub auc: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

impl DatasetMetrics {
    pub fn compute(
        dataset: impl Into<String>,
        scores: &ClassScores,
        cost: &CostModel,
    ) -> Result<Self, MetricsError> {
        let e = eer(scores);
        let t = min_tdcf(scores, cost)?;
        Ok(Self {
            dataset: dataset.into(),
            eer: e.eer,
            eer_threshold: e.threshold,
            min_tdcf: t.min_tdcf,
            tdcf_threshold: t.threshold,
            auc: auc(scores),
            n_real: scores.n_real(),
            n_fake: scores.n_fake(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub mean_eer: f64,
    pub mean_tdcf: f64,
    pub mean_auc: f64,
    /// Population standard deviation of per-dataset AUC; present with two or more datasets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub datasets: Vec<DatasetMetrics>,
    pub aggregate: AggregateMetrics,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Per-dataset metrics plus unweighted means across datasets.
pub fn summarize(
    per_dataset: &BTreeMap<String, Vec<TrialScore>>,
    cost: &CostModel,
) -> Result<MetricsSummary, MetricsError> {
    if per_dataset.is_empty() {
        return Err(MetricsError::NoDatasets);
    }
    cost.validate()?;
    let entries: Vec<(&String, &Vec<TrialScore>)> = per_dataset.iter().collect();
    let datasets = entries
        .par_iter()
        .map(|(name, trials)| {
            let scores = ClassScores::from_trials(trials)?;
            DatasetMetrics::compute(name.as_str(), &scores, cost)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let column = |f: fn(&DatasetMetrics) -> f64| datasets.iter().map(f).collect::<Vec<_>>();
    let aucs = column(|d| d.auc);
    let aggregate = AggregateMetrics {
        mean_eer: mean(&column(|d| d.eer)),
        mean_tdcf: mean(&column(|d| d.min_tdcf)),
        mean_auc: mean(&aucs),
        auc_sigma: (aucs.len() >= 2).then(|| population_std(&aucs)),
    };
    Ok(MetricsSummary {
        datasets,
        aggregate,
    })
}
