//! Residual CNN and PSE-TAE classifiers over a shared parameter store.

pub mod checkpoint;
pub mod cnn;
pub mod params;
pub mod psetae;

use std::fmt;
use std::str::FromStr;

use numcore::{Scalar, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use cnn::{cnn_forward, init_cnn, CnnConfig};
pub use params::{Bound, ParameterSet};
pub use psetae::{init_psetae, positional_encoding, pse_forward, psetae_forward, tae_forward, PseConfig, PseTaeConfig, TaeConfig, TaeOutput};

use crate::error::{Error, Result};
use crate::sampler::SampleBatch;
use crate::seed::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Psetae,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Psetae => "psetae",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(ModelKind::Cnn),
            "psetae" => Ok(ModelKind::Psetae),
            other => Err(Error::Usage(format!("unknown model {other:?}; expected cnn or psetae"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Cnn(CnnConfig),
    Psetae(PseTaeConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Cnn(_) => ModelKind::Cnn,
            ModelConfig::Psetae(_) => ModelKind::Psetae,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelConfig::Cnn(c) => c.classes,
            ModelConfig::Psetae(c) => c.tae.classes,
        }
    }

    pub fn init<T: Scalar>(&self, seed: u64) -> Result<ParameterSet<T>> {
        let mut r = rng(seed);
        match self {
            ModelConfig::Cnn(c) => init_cnn(c, &mut r),
            ModelConfig::Psetae(c) => init_psetae(c, &mut r),
        }
    }
}

/// Logits for a batch with parameters already bound to the batch's tape.
pub fn forward_batch<'t>(config: &ModelConfig, p: &Bound<'t, f32>, batch: &SampleBatch) -> Result<Var<'t, f32>> {
    let tape = p.tape()?;
    match (config, batch) {
        (ModelConfig::Cnn(c), SampleBatch::Chips(b)) => cnn_forward(p, c, tape.constant(b.chips.clone())),
        (ModelConfig::Psetae(c), SampleBatch::Sequences(b)) => Ok(psetae_forward(p, c, &b.values, &b.mask, &b.positions)?.logits),
        (cfg, _) => Err(Error::Contract(format!("{} model cannot consume this batch kind", cfg.kind()))),
    }
}

/// Inference-only logits `(b, K)`.
pub fn predict_logits(config: &ModelConfig, params: &ParameterSet<f32>, batch: &SampleBatch) -> Result<Tensor<f32>> {
    let tape = Tape::new();
    let bound = params.bind(&tape, false);
    let logits = forward_batch(config, &bound, batch)?;
    Ok((*logits.value()).clone())
}

/// Row-wise argmax; the first maximum wins.
pub fn argmax_rows(logits: &Tensor<f32>) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks_exact(k)
        .map(|row| row.iter().enumerate().fold(0, |best, (i, v)| if *v > row[best] { i } else { best }))
        .collect()
}
