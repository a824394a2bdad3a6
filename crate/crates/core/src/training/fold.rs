use std::collections::BTreeMap;
use std::path::Path;

use numcore::Tape;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datastore::BandStats;
use crate::error::{Error, Result};
use crate::fsutil::{write_atomic, write_json};
use crate::models::{
    argmax_rows, forward_batch, predict_logits, save_checkpoint, Checkpoint, CheckpointMeta, CnnConfig, ModelConfig, ModelKind,
    PseTaeConfig,
};
use crate::seed::{derive, fnv1a, rng};
use crate::training::data::{Dataset, Samples};
use crate::training::loss::{focal_loss, AlphaPolicy, FocalConfig};
use crate::training::metrics::{macro_f1, F1Report, Metric};
use crate::training::optim::{adadelta_step, AdadeltaConfig, AdadeltaState};

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub patience: usize,
    pub gamma: f64,
    pub alpha: AlphaPolicy,
    pub rho: f64,
    pub eps: f64,
    pub metric: Metric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch: 32,
            seed: 0,
            patience: 10,
            gamma: 2.0,
            alpha: AlphaPolicy::InverseFrequency,
            rho: 0.9,
            eps: 1e-6,
            metric: Metric::Macro,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::Invalid("epochs and batch size must be at least 1".into()));
        }
        AdadeltaConfig { rho: self.rho, eps: self.eps }.validate()?;
        FocalConfig::new(self.gamma, vec![1.0])?;
        Ok(())
    }
}

/// What the per-epoch score is computed on.
pub enum Monitor<'a> {
    /// Held-out parcels; drives early stopping and best-epoch selection.
    Validation(&'a Dataset),
    /// The training parcels themselves (capacity checks).
    Training,
    /// No scoring; run every epoch and keep the last.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_score: Option<f64>,
}

pub fn model_config(kind: ModelKind, data: &Dataset) -> ModelConfig {
    let spec = data.satellite.spec();
    match kind {
        ModelKind::Cnn => ModelConfig::Cnn(CnnConfig::new(data.combo.len(), spec.chip.0, spec.chip.1, data.classes.len())),
        ModelKind::Psetae => ModelConfig::Psetae(PseTaeConfig::new(data.combo.len(), data.classes.len(), spec.max_len)),
    }
}

/// Samples of an already-normalized dataset; sequences use `seed` for pixel draws.
pub fn prepare(kind: ModelKind, data: &Dataset, seed: u64) -> Result<Samples> {
    let spec = data.satellite.spec();
    Ok(match kind {
        ModelKind::Cnn => Samples::Chips(data.chips()),
        ModelKind::Psetae => Samples::Sequences(data.sequences(spec.max_len, spec.pixel_set, seed)?),
    })
}

fn eval_seed(seed: u64) -> u64 {
    derive(seed, &[fnv1a("eval")])
}

/// Predicted class per sample.
pub fn predict(model: &ModelConfig, params: &crate::models::ParameterSet<f32>, samples: &Samples) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        out.extend(argmax_rows(&predict_logits(model, params, &samples.batch(chunk)?)?));
    }
    Ok(out)
}

pub fn check_disjoint(train: &Dataset, val: &Dataset) -> Result<()> {
    let overlap: Vec<String> = train.parcel_ids().intersection(&val.parcel_ids()).cloned().collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage { parcels: overlap })
    }
}

/// Trains one model on `train` with Adadelta and focal loss.
pub fn train_fold(train: &Dataset, monitor: Monitor<'_>, kind: ModelKind, cfg: &TrainConfig, fold: Option<usize>) -> Result<FoldOutcome> {
    cfg.validate()?;
    if let Monitor::Validation(val) = &monitor {
        check_disjoint(train, val)?;
        if val.is_empty() {
            return Err(Error::Contract("validation set is empty".into()));
        }
    }
    if train.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let model = model_config(kind, train);
    let stats = train.fit_stats()?;
    let train_norm = train.normalized(&stats)?;
    let monitored = match &monitor {
        Monitor::Validation(val) => Some(prepare(kind, &val.normalized(&stats)?, eval_seed(cfg.seed))?),
        Monitor::Training => Some(prepare(kind, &train_norm, eval_seed(cfg.seed))?),
        Monitor::Fixed => None,
    };
    let mut samples = prepare(kind, &train_norm, derive(cfg.seed, &[fnv1a("pixels"), 0]))?;
    let focal = FocalConfig::new(cfg.gamma, cfg.alpha.weights(&samples.labels(), train.classes.len()))?;

    let mut params = model.init::<f32>(derive(cfg.seed, &[fnv1a("init")]))?;
    let mut state = AdadeltaState::new(AdadeltaConfig { rho: cfg.rho, eps: cfg.eps }, &params)?;
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, crate::models::ParameterSet<f32>, AdadeltaState<f32>)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        if kind == ModelKind::Psetae && epoch > 1 {
            samples = prepare(kind, &train_norm, derive(cfg.seed, &[fnv1a("pixels"), epoch as u64]))?;
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng(derive(cfg.seed, &[fnv1a("shuffle"), epoch as u64])));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch = samples.batch(chunk)?;
            let tape = Tape::new();
            let bound = params.bind(&tape, true);
            let logits = forward_batch(&model, &bound, &batch)?;
            let loss = focal_loss(logits, batch.labels(), &focal)?;
            loss_sum += loss.value().item() as f64 * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            let grads: BTreeMap<String, _> = bound.iter().map(|(name, v)| (name.to_string(), grads.get_or_zeros(v))).collect();
            adadelta_step(&mut params, &grads, &mut state)?;
        }
        let train_loss = loss_sum / samples.len() as f64;
        let score = match &monitored {
            Some(m) => Some(cfg.metric.score(&predict(&model, &params, m)?, &m.labels(), &train.classes)?),
            None => None,
        };
        history.push(EpochRecord { epoch, train_loss, val_f1: score });
        match score {
            Some(s) if best.as_ref().is_none_or(|b| s > b.0) => {
                best = Some((s, epoch, params.clone(), state.clone()));
                stale = 0;
            }
            Some(_) => stale += 1,
            None => {}
        }
        if best.as_ref().is_some_and(|b| b.0 >= 1.0) || stale >= cfg.patience {
            break;
        }
    }
    let (best_score, best_epoch, params, state) = match best {
        Some((s, e, p, st)) => (Some(s), e, p, st),
        None => (None, history.len(), params, state),
    };
    let mut metrics = BTreeMap::from([("train_loss".to_string(), history[best_epoch - 1].train_loss)]);
    if let Some(s) = best_score {
        metrics.insert("val_f1".to_string(), s);
    }
    let meta = CheckpointMeta {
        model,
        seed: cfg.seed,
        epoch: best_epoch,
        metrics,
        satellite: train.satellite,
        bands: train.combo.tokens().to_vec(),
        classes: train.classes.clone(),
        stats,
        fold,
        init: params.init_records().clone(),
        train: serde_json::to_value(cfg).map_err(|e| Error::Invalid(e.to_string()))?,
    };
    Ok(FoldOutcome { checkpoint: Checkpoint { meta, params, state: state.to_tensors() }, history, best_epoch, best_score })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: f64,
    pub f1: F1Report,
    pub samples: usize,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Scores a checkpoint on raw (unnormalized) data using its stored statistics.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset, metric: &Metric) -> Result<Evaluation> {
    if data.classes != ckpt.meta.classes || data.combo.tokens() != ckpt.meta.bands.as_slice() || data.satellite != ckpt.meta.satellite {
        return Err(Error::Contract("evaluation data does not match the checkpoint's satellite, bands or classes".into()));
    }
    if data.is_empty() {
        return Err(Error::Contract("nothing to evaluate".into()));
    }
    let stats: &BandStats = &ckpt.meta.stats;
    let samples = prepare(ckpt.meta.model.kind(), &data.normalized(stats)?, eval_seed(ckpt.meta.seed))?;
    let predictions = predict(&ckpt.meta.model, &ckpt.params, &samples)?;
    let labels = samples.labels();
    let score = metric.score(&predictions, &labels, &data.classes)?;
    let f1 = macro_f1(&predictions, &labels, data.classes.len())?;
    Ok(Evaluation { score, f1, samples: labels.len(), predictions, labels })
}

/// `config.json`, `metrics.jsonl` and the checkpoint files.
pub fn write_run(dir: &Path, cfg: &TrainConfig, outcome: &FoldOutcome) -> Result<()> {
    write_json(&dir.join("config.json"), cfg)?;
    let mut lines = String::new();
    for rec in &outcome.history {
        lines.push_str(&serde_json::to_string(rec).map_err(|e| Error::Invalid(e.to_string()))?);
        lines.push('\n');
    }
    write_atomic(&dir.join("metrics.jsonl"), lines.as_bytes())?;
    save_checkpoint(dir, &outcome.checkpoint)
}
