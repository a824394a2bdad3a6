//! Command-line front end.

pub mod report;
pub mod sweep;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::datastore::{BandCombination, DateWindow, Manifest, ManifestFilter, Satellite};
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_atomic, write_json};
use crate::models::{load_checkpoint, ModelKind};
use crate::sampler::{make_split_plan, ParcelInfo, SplitPlan};
use crate::synthgen::{generate_dataset, profile_by_name, zipf_weights, SceneConfig};
use crate::training::{
    class_list, cross_validate, default_grid, evaluate, train_fold, write_run, AlphaPolicy, Dataset, GridPoint, Metric, Monitor,
    TrainConfig,
};

pub use report::{render_tables, ReportRow};
pub use sweep::{sweep_bands, Protocol, SweepConfig};

pub const ROWS_FILE: &str = "rows.json";

#[derive(Debug, Parser)]
#[command(name = "croptype", version, about = "Crop-type classification from multi-sensor parcel imagery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-sensor dataset
    Gen(GenArgs),
    /// Hold out test parcels and deal the rest into folds
    Split(SplitArgs),
    /// Train one model on one fold
    Train(TrainArgs),
    /// Score a trained checkpoint
    Eval(EvalArgs),
    /// Cross-validate a hyperparameter grid, retrain and test
    Cv(CvArgs),
    /// Score band combinations per satellite
    Sweep(SweepArgs),
    /// Render sweep results as tables
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Number of parcels
    #[arg(long, value_name = "N")]
    pub parcels: Option<usize>,
    /// Comma-separated satellites (L8,S2,PS)
    #[arg(long, value_name = "L8,S2,PS")]
    pub satellites: Option<String>,
    /// Comma-separated crop names, most common first
    #[arg(long, value_name = "LIST")]
    pub crops: Option<String>,
    /// Class imbalance: zipf:S or uniform
    #[arg(long, value_name = "zipf:S")]
    pub imbalance: Option<String>,
    /// Gaussian noise sigma for every sensor
    #[arg(long, value_name = "F")]
    pub noise: Option<f64>,
    /// Per-observation cloud dropout probability for every sensor
    #[arg(long, value_name = "F")]
    pub dropout: Option<f64>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Scene configuration JSON; flags override its fields
    #[arg(long, value_name = "F")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, value_name = "F")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "N", default_value_t = 35)]
    pub test_parcels: usize,
    #[arg(long, value_name = "K", default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub seed: u64,
    /// Split plan JSON to write
    #[arg(long, value_name = "F")]
    pub out: PathBuf,
}

/// Flags shared by `train` and `cv`.
#[derive(Debug, Args)]
pub struct CommonTrainArgs {
    #[arg(long, value_name = "F")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "F")]
    pub splits: PathBuf,
    #[arg(long, value_name = "cnn|psetae", value_parser = parse_model)]
    pub model: ModelKind,
    /// Satellite; inferred when the manifest holds only one
    #[arg(long, value_name = "S")]
    pub satellite: Option<Satellite>,
    /// Band combination, e.g. "NIR+SWIR1+SWIR2"; all bands when omitted
    #[arg(long, value_name = "TOK+TOK")]
    pub bands: Option<String>,
    #[arg(long, value_name = "F")]
    pub rho: Option<f64>,
    #[arg(long, value_name = "F")]
    pub eps: Option<f64>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    #[arg(long, value_name = "N")]
    pub batch: Option<usize>,
    #[arg(long, value_name = "N")]
    pub patience: Option<usize>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Selection metric: macro, or a class name for one-vs-rest F1
    #[arg(long, value_name = "macro|CLASS")]
    pub metric: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonTrainArgs,
    /// Validation fold
    #[arg(long, value_name = "I", default_value_t = 0)]
    pub fold: usize,
    /// Focal-loss gamma
    #[arg(long, value_name = "F")]
    pub gamma: Option<f64>,
    /// Class weighting: uniform or inverse-frequency
    #[arg(long, value_name = "POLICY")]
    pub alpha: Option<String>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: CommonTrainArgs,
    /// JSON list of {"gamma", "alpha"} points; the default 4×2 grid when omitted
    #[arg(long, value_name = "F")]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory holding the checkpoint
    #[arg(long, value_name = "DIR")]
    pub ckpt: PathBuf,
    #[arg(long, value_name = "F")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "F")]
    pub splits: PathBuf,
    #[arg(long, value_name = "test|val", default_value = "test", value_parser = ["test", "val"])]
    pub set: String,
    /// Season-day offsets or ISO dates, inclusive
    #[arg(long, value_name = "START:END")]
    pub window: Option<String>,
    /// Fold whose validation parcels `--set val` uses; defaults to the checkpoint's
    #[arg(long, value_name = "I")]
    pub fold: Option<usize>,
    #[arg(long, value_name = "macro|CLASS")]
    pub metric: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "F")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Parallel combinations
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory searched recursively for rows.json files
    #[arg(long, value_name = "DIR")]
    pub runs: PathBuf,
    #[arg(long, value_name = "md|txt", default_value = "md")]
    pub format: String,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Cv(a) => cv(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value).map_err(|e| Error::Invalid(e.to_string()))?);
    Ok(())
}

pub fn parse_imbalance(s: &str, classes: usize) -> Result<Vec<f64>> {
    if s == "uniform" {
        return Ok(vec![1.0; classes]);
    }
    let exp = s
        .strip_prefix("zipf:")
        .and_then(|e| e.parse::<f64>().ok())
        .filter(|e| e.is_finite() && *e >= 0.0)
        .ok_or_else(|| Error::Usage(format!("imbalance {s:?} must be zipf:S with S >= 0, or uniform")))?;
    Ok(zipf_weights(classes, exp))
}

fn gen(a: GenArgs) -> Result<()> {
    let mut cfg: SceneConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SceneConfig::default(),
    };
    if let Some(n) = a.parcels {
        cfg.parcels = n;
    }
    if let Some(s) = &a.satellites {
        cfg.satellites = s.split(',').map(|t| t.trim().parse()).collect::<Result<_>>()?;
    }
    if let Some(list) = &a.crops {
        cfg.profiles = list.split(',').map(|c| profile_by_name(c.trim())).collect::<Result<_>>()?;
        cfg.weights = zipf_weights(cfg.profiles.len(), 1.0);
    }
    if let Some(s) = &a.imbalance {
        cfg.weights = parse_imbalance(s, cfg.profiles.len())?;
    }
    if let Some(f) = a.noise {
        cfg.noise = Satellite::ALL.iter().map(|&s| (s, f)).collect();
    }
    if let Some(f) = a.dropout {
        cfg.dropout = Satellite::ALL.iter().map(|&s| (s, f)).collect();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let summary = generate_dataset(&cfg, &a.out)?;
    print_json(&summary.records)
}

/// Parcel locations from `parcels.jsonl` beside the manifest, else labels at (0, 0).
pub fn parcel_infos(manifest_path: &Path, manifest: &Manifest) -> Result<Vec<ParcelInfo>> {
    let sidecar = manifest.base_dir.join("parcels.jsonl");
    let mut labels: BTreeMap<&str, &str> = BTreeMap::new();
    for r in &manifest.records {
        labels.entry(&r.parcel_id).or_insert(&r.label);
    }
    let located: BTreeMap<String, ParcelInfo> = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<ParcelInfo>(l).map(|p| (p.parcel_id.clone(), p)).map_err(|e| Error::json(&sidecar, e)))
            .collect::<Result<_>>()?
    } else {
        BTreeMap::new()
    };
    if labels.is_empty() {
        return Err(Error::Invalid(format!("{}: manifest has no records", manifest_path.display())));
    }
    Ok(labels
        .into_iter()
        .map(|(id, label)| match located.get(id) {
            Some(p) => ParcelInfo { label: label.to_string(), ..p.clone() },
            None => ParcelInfo { parcel_id: id.to_string(), label: label.to_string(), x: 0.0, y: 0.0 },
        })
        .collect())
}

fn split(a: SplitArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let parcels = parcel_infos(&a.manifest, &manifest)?;
    let plan = make_split_plan(&parcels, a.test_parcels, a.folds, a.seed)?;
    write_json(&a.out, &plan)?;
    print_json(&serde_json::json!({
        "test": plan.test_parcels.len(),
        "folds": plan.folds.iter().map(Vec::len).collect::<Vec<_>>(),
    }))
}

fn load_plan(path: &Path) -> Result<SplitPlan> {
    let plan: SplitPlan = read_json(path)?;
    plan.validate()?;
    Ok(plan)
}

fn resolve_satellite(given: Option<Satellite>, manifest: &Manifest) -> Result<Satellite> {
    if let Some(s) = given {
        return Ok(s);
    }
    let present: std::collections::BTreeSet<Satellite> = manifest.records.iter().map(|r| r.satellite).collect();
    match present.len() {
        1 => Ok(*present.iter().next().unwrap()),
        _ => Err(Error::Usage(format!("manifest holds {present:?}; pass --satellite"))),
    }
}

fn train_config(c: &CommonTrainArgs, gamma: Option<f64>, alpha: Option<&str>) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: c.epochs.unwrap_or(d.epochs),
        batch: c.batch.unwrap_or(d.batch),
        seed: c.seed.unwrap_or(d.seed),
        patience: c.patience.unwrap_or(d.patience),
        gamma: gamma.unwrap_or(d.gamma),
        alpha: alpha.map(AlphaPolicy::parse).transpose()?.unwrap_or(d.alpha),
        rho: c.rho.unwrap_or(d.rho),
        eps: c.eps.unwrap_or(d.eps),
        metric: c.metric.as_deref().map(Metric::parse).unwrap_or_default(),
    };
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(cfg)
}

struct Loaded {
    data: Dataset,
    plan: SplitPlan,
}

fn load_for_training(c: &CommonTrainArgs) -> Result<Loaded> {
    let plan = load_plan(&c.splits)?;
    let manifest = Manifest::load(&c.manifest)?;
    let satellite = resolve_satellite(c.satellite, &manifest)?;
    let combo = match &c.bands {
        Some(b) => BandCombination::parse(b)?,
        None => BandCombination::full(&satellite.spec()),
    };
    let classes = class_list(&manifest, satellite);
    let data = Dataset::load(&manifest, satellite, &combo, &ManifestFilter::default(), &classes)?;
    Ok(Loaded { data, plan })
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a.common, a.gamma, a.alpha.as_deref())?;
    let Loaded { data, plan } = load_for_training(&a.common)?;
    if a.fold >= plan.folds.len() {
        return Err(Error::Usage(format!("fold {} out of range 0..{}", a.fold, plan.folds.len())));
    }
    let train = data.subset(&plan.train_parcels(a.fold));
    let val = data.subset(&plan.val_parcels(a.fold));
    let outcome = train_fold(&train, Monitor::Validation(&val), a.common.model, &cfg, Some(a.fold))?;
    write_run(&a.common.out, &cfg, &outcome)?;
    print_json(&serde_json::json!({
        "best_epoch": outcome.best_epoch,
        "val_f1": outcome.best_score,
        "epochs_run": outcome.history.len(),
    }))
}

fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let plan = load_plan(&a.splits)?;
    let manifest = Manifest::load(&a.manifest)?;
    let parcels = match a.set.as_str() {
        "test" => plan.test_set(),
        _ => {
            let fold = a.fold.or(ckpt.meta.fold).unwrap_or(0);
            if fold >= plan.folds.len() {
                return Err(Error::Usage(format!("fold {fold} out of range 0..{}", plan.folds.len())));
            }
            plan.val_parcels(fold)
        }
    };
    let window = a.window.as_deref().map(str::parse::<DateWindow>).transpose()?;
    let filter = ManifestFilter { parcels: Some(parcels), window, ..Default::default() };
    let combo = BandCombination::new(&ckpt.meta.bands)?;
    let data = Dataset::load(&manifest, ckpt.meta.satellite, &combo, &filter, &ckpt.meta.classes)?;
    let train_metric = ckpt.meta.train.get("metric").cloned().and_then(|m| serde_json::from_value::<Metric>(m).ok());
    let metric = a.metric.as_deref().map(Metric::parse).or(train_metric).unwrap_or_default();
    let result = evaluate(&ckpt, &data, &metric)?;
    print_json(&serde_json::json!({
        "set": a.set,
        "score": result.score,
        "macro_f1": result.f1.macro_f1,
        "per_class": ckpt.meta.classes.iter().zip(&result.f1.per_class).collect::<BTreeMap<_, _>>(),
        "samples": result.samples,
        "confusion": result.f1.confusion,
    }))
}

fn cv(a: CvArgs) -> Result<()> {
    let cfg = train_config(&a.common, None, None)?;
    let grid: Vec<GridPoint> = match &a.grid {
        Some(p) => read_json(p)?,
        None => default_grid(),
    };
    let Loaded { data, plan } = load_for_training(&a.common)?;
    let (report, _) = cross_validate(&data, &plan, a.common.model, &cfg, &grid, Some(&a.common.out))?;
    write_json(&a.common.out.join("cv.json"), &report)?;
    print_json(&serde_json::json!({
        "selected": report.selected,
        "final_epochs": report.final_epochs,
        "test_score": report.test.score,
        "checkpoints": report.checkpoints,
    }))
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg: SweepConfig = read_json(&a.config)?;
    cfg.resolve_paths(a.config.parent().unwrap_or(Path::new(".")));
    let plan = load_plan(&cfg.splits)?;
    let manifests = cfg.manifests.iter().map(|(&s, p)| Ok((s, Manifest::load(p)?))).collect::<Result<BTreeMap<_, _>>>()?;
    let rows = sweep_bands(&cfg, &manifests, &plan, a.jobs)?;
    write_json(&a.out.join(ROWS_FILE), &rows)?;
    let text = render_tables(&rows, "txt")?;
    write_atomic(&a.out.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

/// Every `rows.json` under `dir`, in sorted path order.
pub fn collect_rows(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == ROWS_FILE) {
                files.push(path);
            }
        }
    }
    files.sort();
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_json::<Vec<ReportRow>>(&f)?);
    }
    Ok(rows)
}

fn report(a: ReportArgs) -> Result<()> {
    let rows = collect_rows(&a.runs)?;
    print!("{}", render_tables(&rows, &a.format)?);
    Ok(())
}
