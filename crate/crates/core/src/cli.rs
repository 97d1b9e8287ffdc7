//! Subcommand implementations. Machine-readable results go to stdout and
//! report files; diagnostics go to stderr through `log`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use voxref::fixture::{self, FixtureConfig};
use voxref::metrics::CostModel;
use voxref::protocols::{self, DEFAULT_BINS, DEFAULT_GRID_POINTS};
use voxref::report::{
    self, CostModelEcho, EvalBody, GridConfig, HistogramBody, Report, RunConfig, SweepBody,
    ThresholdBody,
};
use voxref::similarity::{self, DEFAULT_THRESHOLD};
use voxref::store::{self, Embedding, EmbeddingStore, IdentityCounts};
use voxref::TrialScore;

#[derive(Debug, Parser)]
#[command(name = "voxref", version, about = "Identity-based voice deepfake verification")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a store, print statistics, optionally convert between formats.
    Ingest(IngestArgs),
    /// Verify one utterance or embedding against a claimed identity.
    Verify(VerifyArgs),
    /// Score every utterance against its own identity and report EER, t-DCF and AUC.
    Eval(EvalArgs),
    /// AUC as a function of the reference-set size.
    SweepRef(SweepRefArgs),
    /// Accuracy as a function of the decision threshold.
    SweepThreshold(SweepThresholdArgs),
    /// Per-class histograms of the decision statistic.
    Hist(HistArgs),
    /// Generate the seeded synthetic dataset.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSONL or binary store (detected from the magic bytes).
    pub input: PathBuf,
    #[arg(long)]
    pub to_binary: Option<PathBuf>,
    #[arg(long)]
    pub to_jsonl: Option<PathBuf>,
    /// Model provenance recorded in binary output (JSONL input carries none).
    #[arg(long)]
    pub model_name: Option<String>,
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Restrict the run to one dataset tag.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory for reports.
    #[arg(long, env = "VOXREF_OUT_DIR", default_value = "voxref-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct TestInput {
    /// Utterance id inside the store.
    #[arg(long)]
    pub utterance: Option<String>,
    /// JSON file with an embedding array (or an object with an `embedding` key).
    #[arg(long)]
    pub embedding: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub identity: String,
    #[command(flatten)]
    pub input: TestInput,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, default_value_t = 1.0)]
    pub c_miss: f64,
    #[arg(long, default_value_t = 10.0)]
    pub c_fa: f64,
    #[arg(long, default_value_t = 0.95)]
    pub p_target: f64,
    /// Defaults to 1 - p_target.
    #[arg(long)]
    pub p_spoof: Option<f64>,
}

impl CostArgs {
    fn model(&self) -> Result<CostModel> {
        let default = CostModel::default();
        // 1 - 0.95 is not exactly 0.05 in binary
        let complement = if self.p_target == default.p_target {
            default.p_spoof
        } else {
            1.0 - self.p_target
        };
        let cost = CostModel {
            c_miss: self.c_miss,
            c_fa: self.c_fa,
            p_target: self.p_target,
            p_spoof: self.p_spoof.unwrap_or(complement),
        };
        cost.validate()?;
        Ok(cost)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepRefArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,25,100")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SizedArgs {
    /// Cap each reference pool at this many utterances (default: full pools).
    #[arg(long)]
    pub reference_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepThresholdArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    #[command(flatten)]
    pub sized: SizedArgs,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
    /// Sweep over [-1, 1] instead of [0, 1].
    #[arg(long)]
    pub full_range: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    #[command(flatten)]
    pub store: StoreArgs,
    #[command(flatten)]
    pub sized: SizedArgs,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StoreFormat {
    Binary,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Output store path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    pub format: StoreFormat,
    #[arg(long, default_value_t = 20)]
    pub identities: usize,
    #[arg(long, default_value_t = 300)]
    pub bona_fide: usize,
    #[arg(long, default_value_t = 100)]
    pub spoof: usize,
    #[arg(long, default_value_t = 256)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub modes: usize,
    #[arg(long, default_value_t = 1)]
    pub datasets: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring worker threads")?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a, seed),
        Command::Verify(a) => cmd_verify(a, seed),
        Command::Eval(a) => cmd_eval(a, seed),
        Command::SweepRef(a) => cmd_sweep_ref(a, seed),
        Command::SweepThreshold(a) => cmd_sweep_threshold(a, seed),
        Command::Hist(a) => cmd_hist(a, seed),
        Command::Fixture(a) => cmd_fixture(a, seed),
    }
}

fn load(path: &Path) -> Result<EmbeddingStore> {
    let store = store::read_store(path).with_context(|| format!("reading {}", path.display()))?;
    info!(
        "loaded {} records (dim {:?}, model {}) from {}",
        store.len(),
        store.dim(),
        store.model_name(),
        path.display()
    );
    Ok(store)
}

fn load_scoped(args: &StoreArgs) -> Result<EmbeddingStore> {
    let store = load(&args.store)?;
    match &args.dataset {
        None => Ok(store),
        Some(tag) => {
            let scoped = store.restrict_to_dataset(tag);
            if scoped.is_empty() {
                bail!("no records with dataset tag `{tag}`");
            }
            Ok(scoped)
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn base_config(command: &str, seed: u64, store: &StoreArgs, out: &OutArgs) -> RunConfig {
    RunConfig {
        command: command.into(),
        store: Some(store.store.clone()),
        output_dir: Some(out.out.clone()),
        seed,
        dataset: store.dataset.clone(),
        ..RunConfig::default()
    }
}

#[derive(Serialize)]
struct PoolStats {
    min: usize,
    mean: f64,
    max: usize,
}

#[derive(Serialize)]
struct StoreStats<'a> {
    records: usize,
    dim: Option<usize>,
    model_name: &'a str,
    bona_fide: usize,
    spoof: usize,
    identities: usize,
    datasets: Vec<&'a str>,
    bona_fide_pool: Option<PoolStats>,
    per_identity: std::collections::BTreeMap<&'a str, IdentityCounts>,
}

fn store_stats(store: &EmbeddingStore) -> StoreStats<'_> {
    let per_identity = store.identity_counts();
    let pools: Vec<usize> = per_identity.values().map(|c| c.bona_fide).collect();
    let bona_fide: usize = pools.iter().sum();
    StoreStats {
        records: store.len(),
        dim: store.dim(),
        model_name: store.model_name(),
        bona_fide,
        spoof: store.len() - bona_fide,
        identities: per_identity.len(),
        datasets: store.datasets(),
        bona_fide_pool: (!pools.is_empty()).then(|| PoolStats {
            min: *pools.iter().min().unwrap(),
            mean: bona_fide as f64 / pools.len() as f64,
            max: *pools.iter().max().unwrap(),
        }),
        per_identity,
    }
}

fn cmd_ingest(a: IngestArgs, _seed: u64) -> Result<()> {
    let mut store = load(&a.input)?;
    if let Some(name) = a.model_name {
        store = store.with_model_name(name);
    }
    if let Some(path) = &a.to_binary {
        store::write_binary(&store, path)
            .with_context(|| format!("writing {}", path.display()))?;
        let back = store::read_binary(path)?;
        if back != store {
            bail!("round-trip check failed for {}", path.display());
        }
        info!("wrote binary store {}", path.display());
    }
    if let Some(path) = &a.to_jsonl {
        store::write_jsonl(&store, path).with_context(|| format!("writing {}", path.display()))?;
        info!("wrote JSONL store {}", path.display());
    }
    print_json(&store_stats(&store))
}

fn read_embedding_file(path: &Path) -> Result<Embedding> {
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum EmbeddingFile {
        Bare(Vec<f64>),
        Wrapped { embedding: Vec<f64> },
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values = match serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?
    {
        EmbeddingFile::Bare(v) | EmbeddingFile::Wrapped { embedding: v } => v,
    };
    Embedding::from_f64(&values).with_context(|| format!("invalid embedding in {}", path.display()))
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    claimed_identity: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    utterance_id: Option<&'a str>,
    reference_size: usize,
    #[serde(flatten)]
    verdict: similarity::Verdict,
}

fn cmd_verify(a: VerifyArgs, _seed: u64) -> Result<()> {
    if !a.threshold.is_finite() {
        bail!("threshold must be finite");
    }
    let store = load(&a.store)?;
    let pool = store.reference_set(&a.identity)?;
    let (statistic, reference_size) = match (&a.input.utterance, &a.input.embedding) {
        (Some(id), _) => {
            let test = store
                .get(id)
                .with_context(|| format!("unknown utterance `{id}`"))?;
            let held_out = similarity::is_self_trial(test.label, &test.identity_id, &a.identity)
                && pool.contains(id);
            let size = pool.len() - usize::from(held_out);
            (similarity::score_against(test, &pool)?, size)
        }
        (None, Some(path)) => {
            let emb = read_embedding_file(path)?;
            (similarity::max_similarity(&emb, &pool)?, pool.len())
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    let verdict = similarity::decide(statistic, a.threshold);
    print_json(&VerifyOutput {
        claimed_identity: &a.identity,
        utterance_id: a.input.utterance.as_deref(),
        reference_size,
        verdict,
    })
}

fn cmd_eval(a: EvalArgs, seed: u64) -> Result<()> {
    let cost = a.cost.model()?;
    let store = load_scoped(&a.store)?;
    prepare_out(&a.out.out)?;
    let trials = protocols::self_trials(&store)?;
    report::write_trials_jsonl(&a.out.out.join("trials.jsonl"), &trials)?;
    let summary = voxref::metrics::summarize(&protocols::group_by_dataset(&store, trials), &cost)?;
    let config = RunConfig {
        cost_model: Some(cost),
        ..base_config("eval", seed, &a.store, &a.out)
    };
    let doc = Report::new(
        "eval",
        store.model_name(),
        config,
        EvalBody {
            summary,
            cost_model: CostModelEcho::from(cost),
        },
    );
    let path = a.out.out.join("eval.json");
    report::write_json(&path, &doc)?;
    info!("wrote {}", path.display());
    print_json(&doc)
}

fn cmd_sweep_ref(a: SweepRefArgs, seed: u64) -> Result<()> {
    let store = load_scoped(&a.store)?;
    prepare_out(&a.out.out)?;
    let sweep = protocols::reference_sweep(&store, &a.sizes, a.repetitions, seed)?;
    report::write_sweep_csv(&a.out.out.join("sweep_ref.csv"), &sweep)?;
    let config = RunConfig {
        sizes: Some(a.sizes.clone()),
        repetitions: Some(a.repetitions),
        ..base_config("sweep-ref", seed, &a.store, &a.out)
    };
    let doc = Report::new("sweep-ref", store.model_name(), config, SweepBody { sweep });
    let path = a.out.out.join("sweep_ref.json");
    report::write_json(&path, &doc)?;
    info!("wrote {}", path.display());
    print_json(&doc)
}

fn trials_for(store: &EmbeddingStore, reference_size: Option<usize>, seed: u64) -> Result<Vec<TrialScore>> {
    Ok(match reference_size {
        None => protocols::self_trials(store)?,
        Some(k) => protocols::sized_trials(store, k, seed, 0)?,
    })
}

fn cmd_sweep_threshold(a: SweepThresholdArgs, seed: u64) -> Result<()> {
    if a.grid_points == 0 {
        bail!("--grid-points must be at least 1");
    }
    let store = load_scoped(&a.store)?;
    prepare_out(&a.out.out)?;
    let trials = trials_for(&store, a.sized.reference_size, seed)?;
    let grid = protocols::default_grid(a.full_range, a.grid_points);
    let sweep = protocols::threshold_sweep(&trials, &grid)?;
    report::write_threshold_csv(&a.out.out.join("sweep_threshold.csv"), &sweep)?;
    let config = RunConfig {
        reference_size: a.sized.reference_size,
        grid: Some(GridConfig {
            points: a.grid_points,
            full_range: a.full_range,
        }),
        threshold: Some(DEFAULT_THRESHOLD),
        ..base_config("sweep-threshold", seed, &a.store, &a.out)
    };
    let doc = Report::new(
        "sweep-threshold",
        store.model_name(),
        config,
        ThresholdBody { sweep },
    );
    let path = a.out.out.join("sweep_threshold.json");
    report::write_json(&path, &doc)?;
    info!("wrote {}", path.display());
    print_json(&doc)
}

fn cmd_hist(a: HistArgs, seed: u64) -> Result<()> {
    let store = load_scoped(&a.store)?;
    prepare_out(&a.out.out)?;
    let trials = trials_for(&store, a.sized.reference_size, seed)?;
    let histogram = protocols::histogram(&trials, a.bins, a.sized.reference_size)?;
    report::write_histogram_csv(&a.out.out.join("hist.csv"), &histogram)?;
    let config = RunConfig {
        reference_size: a.sized.reference_size,
        bins: Some(a.bins),
        ..base_config("hist", seed, &a.store, &a.out)
    };
    let doc = Report::new("hist", store.model_name(), config, HistogramBody { histogram });
    let path = a.out.out.join("hist.json");
    report::write_json(&path, &doc)?;
    info!("wrote {}", path.display());
    print_json(&doc)
}

fn cmd_fixture(a: FixtureArgs, seed: u64) -> Result<()> {
    let config = FixtureConfig {
        identities: a.identities,
        bona_fide_per_identity: a.bona_fide,
        spoof_per_identity: a.spoof,
        dim: a.dim,
        modes: a.modes,
        datasets: a.datasets,
        seed,
        ..FixtureConfig::default()
    };
    let store = fixture::generate(&config)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_out(parent)?;
    }
    match a.format {
        StoreFormat::Binary => store::write_binary(&store, &a.out)?,
        StoreFormat::Jsonl => store::write_jsonl(&store, &a.out)?,
    }
    info!("wrote {} records to {}", store.len(), a.out.display());
    print_json(&store_stats(&store))
}
