use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::cli::report::ReportRow;
use crate::datastore::{BandCombination, Manifest, ManifestFilter, Satellite};
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::sampler::SplitPlan;
use crate::training::{class_list, cross_validate, evaluate, train_fold, Dataset, GridPoint, Monitor, TrainConfig};

pub const DEFAULT_BASELINE: &str = "R+G+B";

/// How each combination is scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Grid search over all folds, retrain, test.
    #[default]
    Cv,
    /// Train on every fold but `fold`, early-stop on `fold`, test.
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub models: Vec<ModelKind>,
    /// Satellite → band combinations.
    pub combinations: BTreeMap<Satellite, Vec<String>>,
    /// Satellite → manifest path (relative to the config file).
    pub manifests: BTreeMap<Satellite, PathBuf>,
    pub splits: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub baseline: BTreeMap<Satellite, String>,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub fold: usize,
    #[serde(default)]
    pub grid: Option<Vec<GridPoint>>,
    /// Documented expectations on the results; carried along, not enforced here.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

impl SweepConfig {
    pub fn baseline_for(&self, sat: Satellite) -> String {
        self.baseline.get(&sat).cloned().unwrap_or_else(|| DEFAULT_BASELINE.to_string())
    }

    /// Combination lists with the baseline inserted first where missing.
    pub fn resolved_combinations(&self) -> BTreeMap<Satellite, Vec<String>> {
        self.combinations
            .iter()
            .map(|(&sat, combos)| {
                let base = self.baseline_for(sat);
                let mut list = combos.clone();
                if !list.contains(&base) {
                    list.insert(0, base);
                }
                (sat, list)
            })
            .collect()
    }

    /// Makes relative paths absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.splits);
        self.manifests.values_mut().for_each(fix);
    }
}

struct Job {
    satellite: Satellite,
    model: ModelKind,
    combination: String,
}

fn dims(model: ModelKind, sat: Satellite, bands: usize) -> String {
    let spec = sat.spec();
    match model {
        ModelKind::Cnn => format!("{}×{}×{bands}", spec.chip.0, spec.chip.1),
        ModelKind::Psetae => format!("{}×{}×{}×{bands}", spec.max_len, spec.chip.0, spec.chip.1),
    }
}

fn score(job: &Job, manifest: &Manifest, plan: &SplitPlan, cfg: &SweepConfig) -> Result<(f64, usize)> {
    let combo = BandCombination::parse(&job.combination)?;
    let classes = class_list(manifest, job.satellite);
    let data = Dataset::load(manifest, job.satellite, &combo, &ManifestFilter::default(), &classes)?;
    match cfg.protocol {
        Protocol::Cv => {
            let grid = cfg.grid.clone().unwrap_or_else(|| vec![GridPoint { gamma: cfg.train.gamma, alpha: cfg.train.alpha }]);
            let (report, _) = cross_validate(&data, plan, job.model, &cfg.train, &grid, None)?;
            Ok((report.test.score, combo.len()))
        }
        Protocol::Holdout => {
            if cfg.fold >= plan.folds.len() {
                return Err(Error::Usage(format!("fold {} out of range 0..{}", cfg.fold, plan.folds.len())));
            }
            let train = data.subset(&plan.train_parcels(cfg.fold));
            let val = data.subset(&plan.val_parcels(cfg.fold));
            let outcome = train_fold(&train, Monitor::Validation(&val), job.model, &cfg.train, Some(cfg.fold))?;
            let test = evaluate(&outcome.checkpoint, &data.subset(&plan.test_set()), &cfg.train.metric)?;
            Ok((test.score, combo.len()))
        }
    }
}

/// Scores every (satellite, model, combination); combinations a sensor
/// cannot provide become `skipped:UnknownBand` rows.
pub fn sweep_bands(cfg: &SweepConfig, manifests: &BTreeMap<Satellite, Manifest>, plan: &SplitPlan, jobs: usize) -> Result<Vec<ReportRow>> {
    plan.validate()?;
    let mut work = Vec::new();
    for (sat, combos) in cfg.resolved_combinations() {
        for &model in &cfg.models {
            for combination in &combos {
                work.push(Job { satellite: sat, model, combination: combination.clone() });
            }
        }
    }
    for job in &work {
        if !manifests.contains_key(&job.satellite) {
            return Err(Error::Usage(format!("no manifest configured for {}", job.satellite)));
        }
    }
    let results: Vec<Mutex<Option<Result<(f64, usize)>>>> = work.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(work.len().max(1)) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(job) = work.get(i) else { break };
                let r = score(job, &manifests[&job.satellite], plan, cfg);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut rows = Vec::with_capacity(work.len());
    for (job, slot) in work.iter().zip(results) {
        let outcome = slot.into_inner().unwrap().expect("every job runs");
        let baseline = job.combination == cfg.baseline_for(job.satellite);
        let row = match outcome {
            Ok((f1, bands)) => ReportRow {
                satellite: job.satellite,
                model: job.model,
                combination: job.combination.clone(),
                dims: dims(job.model, job.satellite, bands),
                f1: Some(f1),
                gain: None,
                baseline,
                status: "ok".into(),
            },
            Err(Error::UnknownBand { .. }) => ReportRow {
                satellite: job.satellite,
                model: job.model,
                combination: job.combination.clone(),
                dims: String::new(),
                f1: None,
                gain: None,
                baseline,
                status: "skipped:UnknownBand".into(),
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    let baselines: BTreeMap<(Satellite, ModelKind), f64> =
        rows.iter().filter(|r| r.baseline).filter_map(|r| r.f1.map(|f| ((r.satellite, r.model), f))).collect();
    for r in rows.iter_mut() {
        if let Some(f) = r.f1 {
            let base = baselines
                .get(&(r.satellite, r.model))
                .ok_or_else(|| Error::Contract(format!("baseline run missing for {} {}", r.satellite, r.model)))?;
            r.gain = Some(if r.baseline { 0.0 } else { f - base });
        }
    }
    Ok(rows)
}
