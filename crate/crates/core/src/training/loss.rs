use numcore::{Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaPolicy {
    Uniform,
    InverseFrequency,
}

impl AlphaPolicy {
    pub fn name(self) -> &'static str {
        match self {
            AlphaPolicy::Uniform => "uniform",
            AlphaPolicy::InverseFrequency => "inverse-frequency",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(AlphaPolicy::Uniform),
            "inverse-frequency" | "inverse" => Ok(AlphaPolicy::InverseFrequency),
            other => Err(Error::Usage(format!("unknown alpha policy {other:?}; expected uniform or inverse-frequency"))),
        }
    }

    /// Per-class weights for training labels `labels` over `classes` classes.
    pub fn weights(self, labels: &[usize], classes: usize) -> Vec<f64> {
        match self {
            AlphaPolicy::Uniform => vec![1.0; classes],
            AlphaPolicy::InverseFrequency => inverse_frequency_alpha(labels, classes),
        }
    }
}

/// `α_c ∝ 1/count(c)` normalized to mean 1; absent classes count as one sample.
pub fn inverse_frequency_alpha(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let raw: Vec<f64> = counts.iter().map(|&c| 1.0 / c.max(1) as f64).collect();
    let mean = raw.iter().sum::<f64>() / classes as f64;
    raw.iter().map(|r| r / mean).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    pub gamma: f64,
    pub alpha: Vec<f64>,
}

impl FocalConfig {
    pub fn new(gamma: f64, alpha: Vec<f64>) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Invalid(format!("focal gamma must be >= 0, got {gamma}")));
        }
        if alpha.is_empty() || alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Invalid(format!("focal alpha must be positive, got {alpha:?}")));
        }
        Ok(FocalConfig { gamma, alpha })
    }

    pub fn uniform(gamma: f64, classes: usize) -> Self {
        FocalConfig { gamma, alpha: vec![1.0; classes] }
    }
}

/// Batch mean of `−α_y (1−p_y)^γ ln p_y` with `p = softmax(logits)`.
pub fn focal_loss<'t, T: Scalar>(logits: Var<'t, T>, labels: &[usize], cfg: &FocalConfig) -> Result<Var<'t, T>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::Contract(format!("logits {shape:?} do not match {} labels", labels.len())));
    }
    let k = shape[1];
    if cfg.alpha.len() != k {
        return Err(Error::Contract(format!("{} alpha weights for {k} classes", cfg.alpha.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Contract(format!("label {bad} out of range 0..{k}")));
    }
    let py = logits.softmax(1)?.pick(labels)?;
    let modulator = py.affine_scalar(-T::one(), T::one()).powf(T::of(cfg.gamma));
    let per_sample = modulator.mul(py.ln())?;
    let b = labels.len() as f64;
    let coef = Tensor::new(vec![labels.len()], labels.iter().map(|&l| T::of(-cfg.alpha[l] / b)).collect())?;
    Ok(per_sample.mul(logits.tape().constant(coef))?.sum())
}
