//! Subcommand definitions and their implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gazerank_core::annotation::{AnnotationStore, PairCatalog};
use gazerank_core::gaze::{process_trial, read_samples_csv, write_png, write_sgrd, TrialLayout};
use gazerank_core::model::AlignmentSource;
use gazerank_core::pipeline::{
    benchmark_attention, evaluate, export_overlays, load_dataset, split_dataset, train, ComparisonRecord, Dataset,
    DatasetSplit, EvalResolution, PrepareOptions, PreparedData, SourceSelection, SyntheticTask,
};
use gazerank_core::vit::checkpoint::load_checkpoint;
use gazerank_core::{MapSource, SiameseModel};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "gazerank", version, about = "Gaze-guided pairwise perception models")]
pub struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gaze preprocessing.
    #[command(subcommand)]
    Gaze(GazeCommand),
    /// Dataset utilities.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a model and write its checkpoint, log and config.
    Train(TrainArgs),
    /// Classification and ranking accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Attention maps: benchmarking and overlays.
    #[command(subcommand)]
    Attn(AttnCommand),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Write the planted-target synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum GazeCommand {
    /// Detect fixations in one trial and write per-side gaze artifacts.
    Process(GazeArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Seeded 70/10/20 split of a manifest.
    Split(SplitArgs),
}

#[derive(Debug, Subcommand)]
pub enum AttnCommand {
    /// Attention–gaze metrics over gaze-bearing pairs.
    Bench(BenchArgs),
    /// Heatmap overlays for selected pairs.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GazeArgs {
    /// Gaze samples CSV (`t_ms,x_px,y_px,valid`).
    #[arg(long)]
    pub samples: PathBuf,
    /// Trial layout JSON.
    #[arg(long)]
    pub layout: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Mark the samples as a cursor trace.
    #[arg(long)]
    pub proxy: bool,
    #[arg(long)]
    pub sigma_px: Option<f64>,
    #[arg(long)]
    pub dispersion_px: Option<f64>,
    #[arg(long)]
    pub min_duration_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SourceArg {
    None,
    Raw,
    Rollout,
}

impl From<SourceArg> for AlignmentSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::None => AlignmentSource::None,
            SourceArg::Raw => AlignmentSource::Raw,
            SourceArg::Rollout => AlignmentSource::Rollout,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Split JSON; without it a split is made with the run seed.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda_gaze: Option<f64>,
    #[arg(long)]
    pub lambda_rank: Option<f64>,
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum Subset {
    Train,
    Val,
    #[default]
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Checkpoint directory (`model.json` + `model.bin`).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub subset: Subset,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Per-pair predictions CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BenchSource {
    Raw,
    Rollout,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Resolution {
    Patch,
    Pixel,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub source: Option<BenchSource>,
    #[arg(long, value_enum)]
    pub resolution: Option<Resolution>,
    /// Per-image metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Aggregate summary JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MapArg {
    Raw,
    Rollout,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated pair ids; defaults to the chosen subset.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Vec<String>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_enum, default_value = "raw")]
    pub source: MapArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Pair catalog CSV (`pair_id,left_image,right_image`).
    #[arg(long)]
    pub catalog: PathBuf,
    /// Directory for the choice log and session snapshot.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Directory with the browser UI.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Keep cursor traces as proxy gaze.
    #[arg(long)]
    pub proxy_gaze: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub pairs: usize,
    #[arg(long, default_value_t = 32)]
    pub image_size: usize,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_split(path: &Path) -> Result<DatasetSplit> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn subset_ids(ds: &Dataset, split: Option<&Path>, subset: Subset) -> Result<Vec<String>> {
    let all = || ds.records.iter().map(|r| r.pair_id.clone()).collect();
    Ok(match (split, subset) {
        (_, Subset::All) => all(),
        (None, _) => {
            log::warn!("no split given: using every record");
            all()
        }
        (Some(p), s) => {
            let split = read_split(p)?;
            match s {
                Subset::Train => split.train,
                Subset::Val => split.val,
                _ => split.test,
            }
        }
    })
}

fn records_for(ds: &Dataset, ids: &[String]) -> Result<Vec<ComparisonRecord>> {
    ids.iter()
        .map(|id| {
            ds.records
                .iter()
                .find(|r| &r.pair_id == id)
                .cloned()
                .with_context(|| format!("pair {id} is not in the manifest"))
        })
        .collect()
}

struct Loaded {
    model: SiameseModel,
    dataset: Dataset,
    ids: Vec<String>,
}

fn load_for_eval(args: &DataArgs) -> Result<Loaded> {
    let model = load_checkpoint(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let dataset = load_dataset(&args.manifest)?;
    let ids = subset_ids(&dataset, args.split.as_deref(), args.subset)?;
    Ok(Loaded { model, dataset, ids })
}

fn prepare(l: &Loaded, cfg: &Config) -> Result<PreparedData> {
    let records = records_for(&l.dataset, &l.ids)?;
    let options = PrepareOptions { allow_proxy_gaze: cfg.allow_proxy_gaze };
    Ok(PreparedData::load(&l.dataset, &records, l.model.config(), options)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load_or_default(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.serve.seed = seed;
    }
    match cli.command {
        Command::Gaze(GazeCommand::Process(a)) => gaze_process(&mut cfg, a),
        Command::Dataset(DatasetCommand::Split(a)) => dataset_split(cli.seed.unwrap_or(cfg.train.seed), a),
        Command::Train(a) => train_cmd(cfg, a),
        Command::Eval(a) => eval_cmd(&cfg, a),
        Command::Attn(AttnCommand::Bench(a)) => bench_cmd(cfg, a),
        Command::Attn(AttnCommand::Export(a)) => export_cmd(a),
        Command::Serve(a) => serve_cmd(cfg, a),
        Command::Synth(a) => synth_cmd(cli.seed.unwrap_or(0), a),
    }
}

fn gaze_process(cfg: &mut Config, a: GazeArgs) -> Result<()> {
    let g = &mut cfg.gaze;
    g.sigma_px = a.sigma_px.or(g.sigma_px);
    g.dispersion_px = a.dispersion_px.or(g.dispersion_px);
    if let Some(d) = a.min_duration_ms {
        g.min_duration_ms = d;
    }
    let samples = read_samples_csv(&a.samples)?;
    let layout = TrialLayout::load(&a.layout)?;
    let trial = process_trial(&samples, &layout, g, a.proxy)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("fixations.json"), &trial.fixations)?;
    for (side, artifact) in [("left", &trial.left), ("right", &trial.right)] {
        artifact.save(&a.out.join(format!("{side}.json")))?;
        let saliency = artifact.saliency()?;
        write_sgrd(&a.out.join(format!("{side}.sgrd")), &saliency)?;
        write_png(&a.out.join(format!("{side}.png")), &saliency)?;
    }
    println!(
        "{} fixations ({} left, {} right), sigma {:.2}px",
        trial.fixations.len(),
        trial.left.fixations.len(),
        trial.right.fixations.len(),
        trial.left.sigma_px
    );
    Ok(())
}

fn dataset_split(seed: u64, a: SplitArgs) -> Result<()> {
    let ds = load_dataset(&a.manifest)?;
    let split = split_dataset(&ds.records, seed)?;
    write_json(&a.out, &split)?;
    println!(
        "{} records ({} ties rejected): train {}, val {}, test {}",
        ds.records.len(),
        ds.report.ties.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

fn train_cmd(mut cfg: Config, a: TrainArgs) -> Result<()> {
    let t = &mut cfg.train;
    t.max_epochs = a.epochs.unwrap_or(t.max_epochs);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.optimizer.lr = a.lr.unwrap_or(t.optimizer.lr);
    t.loss.lambda_gaze = a.lambda_gaze.unwrap_or(t.loss.lambda_gaze);
    t.loss.lambda_rank = a.lambda_rank.unwrap_or(t.loss.lambda_rank);
    t.early_stop_patience = a.patience.unwrap_or(t.early_stop_patience);
    if let Some(s) = a.source {
        t.source = s.into();
    }
    let ds = load_dataset(&a.manifest)?;
    let split = match &a.split {
        Some(p) => read_split(p)?,
        None => split_dataset(&ds.records, cfg.train.seed)?,
    };
    let mut ids = split.train.clone();
    ids.extend(split.val.iter().cloned());
    let records = records_for(&ds, &ids)?;
    let options = PrepareOptions { allow_proxy_gaze: cfg.allow_proxy_gaze };
    let data = PreparedData::load(&ds, &records, &cfg.model, options)?;
    let train_idx = data.indices(&split.train)?;
    let val_idx = data.indices(&split.val)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    write_json(&a.out.join("split.json"), &split)?;
    let out = train(&data, &train_idx, &val_idx, &cfg.model, &cfg.train, Some(&a.out))?;
    let last = out.log.last().expect("at least one epoch");
    println!(
        "trained {} epochs (best {}), final train loss {:.5}, best val loss {}",
        out.log.len(),
        out.best_epoch,
        last.train_loss,
        out.log
            .get(out.best_epoch.saturating_sub(1))
            .and_then(|r| r.val_loss)
            .map_or("n/a".into(), |v| format!("{v:.5}"))
    );
    Ok(())
}

fn eval_cmd(cfg: &Config, a: EvalArgs) -> Result<()> {
    let l = load_for_eval(&a.data)?;
    let data = prepare(&l, cfg)?;
    let indices: Vec<usize> = (0..data.pairs.len()).collect();
    let e = evaluate(&l.model, &data, &indices)?;
    if let Some(out) = &a.out {
        e.write_csv(out)?;
    }
    println!("{}", serde_json::to_string_pretty(&e.result)?);
    Ok(())
}

fn bench_cmd(mut cfg: Config, a: BenchArgs) -> Result<()> {
    let b = &mut cfg.benchmark;
    if let Some(s) = a.source {
        b.sources = match s {
            BenchSource::Raw => SourceSelection::Raw,
            BenchSource::Rollout => SourceSelection::Rollout,
            BenchSource::Both => SourceSelection::Both,
        };
    }
    if let Some(r) = a.resolution {
        b.resolution = match r {
            Resolution::Patch => EvalResolution::Patch,
            Resolution::Pixel => EvalResolution::Pixel,
        };
    }
    let l = load_for_eval(&a.data)?;
    let data = prepare(&l, &cfg)?;
    let indices: Vec<usize> = (0..data.pairs.len()).collect();
    let report = benchmark_attention(&l.model, &data, &indices, &cfg.benchmark)?;
    report.write_csv(&a.out)?;
    let summary = report.summary_json()?;
    if let Some(p) = &a.summary {
        write_json(p, &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn export_cmd(a: ExportArgs) -> Result<()> {
    let l = load_for_eval(&a.data)?;
    let mut ids = if a.pairs.is_empty() { l.ids.clone() } else { a.pairs.clone() };
    if let Some(n) = a.limit {
        ids.truncate(n);
    }
    let source = match a.source {
        MapArg::Raw => MapSource::Raw,
        MapArg::Rollout => MapSource::Rollout,
    };
    let out = export_overlays(&l.model, &l.dataset, &ids, source, &a.out)?;
    println!("wrote {} files, skipped {} pairs", out.written.len(), out.skipped.len());
    for (id, why) in &out.skipped {
        println!("  skipped {id}: {why}");
    }
    Ok(())
}

fn serve_cmd(mut cfg: Config, a: ServeArgs) -> Result<()> {
    cfg.serve.proxy_gaze |= a.proxy_gaze;
    let catalog = PairCatalog::load(&a.catalog)?;
    if catalog.pairs.is_empty() {
        bail!("catalog {} has no pairs", a.catalog.display());
    }
    let store = AnnotationStore::open(&a.store, catalog, cfg.serve.clone())?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crate::server::serve(store, a.static_dir, &a.addr))
}

fn synth_cmd(seed: u64, a: SynthArgs) -> Result<()> {
    let task = SyntheticTask {
        pairs: a.pairs,
        image_size: a.image_size,
        seed,
        ..Default::default()
    };
    let pairs = task.generate();
    let manifest = task.write(&pairs, &a.out)?;
    let config = Config { model: task.model_config(), ..Config::default() };
    let config_path = a.out.join("config.toml");
    fs::write(&config_path, toml::to_string(&config)?)?;
    println!("wrote {} pairs to {} (model settings in {})", pairs.len(), manifest.display(), config_path.display());
    Ok(())
}
