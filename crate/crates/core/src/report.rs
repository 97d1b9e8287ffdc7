//! Report documents written by the command-line tool.
//!
//! Every JSON report carries the engine version, the fully resolved run
//! configuration and a `generated_at` timestamp. The timestamp is the only
//! field that differs between two runs with the same configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::metrics::{CostModel, MetricsSummary};
use crate::protocols::{ScoreHistogram, SweepResult, ThresholdSweep};
use crate::similarity::TrialScore;
use crate::ENGINE_VERSION;

/// Resolved settings of one run. Fields that a command does not use stay `None`
/// and are omitted from the echo.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub store: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_model: Option<CostModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConfig {
    pub points: usize,
    pub full_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostModelEcho {
    pub c_miss: f64,
    pub c_fa: f64,
    pub p_target: f64,
    pub p_spoof: f64,
    /// The default costs and priors are a community convention, not measured values.
    pub defaults_are_convention_not_paper: bool,
    pub using_defaults: bool,
}

impl From<CostModel> for CostModelEcho {
    fn from(c: CostModel) -> Self {
        Self {
            c_miss: c.c_miss,
            c_fa: c.c_fa,
            p_target: c.p_target,
            p_spoof: c.p_spoof,
            defaults_are_convention_not_paper: true,
            using_defaults: c == CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub kind: &'static str,
    pub engine_version: &'static str,
    pub generated_at: String,
    pub model_name: String,
    pub config: RunConfig,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(kind: &'static str, model_name: &str, config: RunConfig, body: T) -> Self {
        Self {
            kind,
            engine_version: ENGINE_VERSION,
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            model_name: model_name.to_string(),
            config,
            body,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalBody {
    #[serde(flatten)]
    pub summary: MetricsSummary,
    pub cost_model: CostModelEcho,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepBody {
    #[serde(flatten)]
    pub sweep: SweepResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdBody {
    #[serde(flatten)]
    pub sweep: ThresholdSweep,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramBody {
    #[serde(flatten)]
    pub histogram: ScoreHistogram,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn write_trials_jsonl(path: &Path, trials: &[TrialScore]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in trials {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["size", "mean_auc", "std_auc", "min_auc", "max_auc"])?;
    for p in &sweep.points {
        w.serialize((p.size, p.mean_auc, p.std_auc, p.min_auc, p.max_auc))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_threshold_csv(path: &Path, sweep: &ThresholdSweep) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "accuracy"])?;
    for p in &sweep.points {
        w.serialize((p.threshold, p.accuracy))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv(path: &Path, h: &ScoreHistogram) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_lo", "bin_hi", "real_count", "fake_count"])?;
    for (i, (r, f)) in h.real_counts.iter().zip(&h.fake_counts).enumerate() {
        w.serialize((h.bin_edges[i], h.bin_edges[i + 1], r, f))?;
    }
    w.flush()?;
    Ok(())
}
