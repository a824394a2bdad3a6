use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    /// `None` for classes absent from both labels and predictions.
    pub per_class: Vec<Option<f64>>,
    pub macro_f1: f64,
    /// `confusion[label][prediction]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn macro_f1(predictions: &[usize], labels: &[usize], classes: usize) -> Result<F1Report> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::Contract(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::Contract(format!("class index out of range 0..{classes}")));
        }
        confusion[l][p] += 1;
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let tp = confusion[c][c];
            let fp: usize = (0..classes).map(|l| confusion[l][c]).sum::<usize>() - tp;
            let fne: usize = confusion[c].iter().sum::<usize>() - tp;
            let denom = 2 * tp + fp + fne;
            (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
        })
        .collect();
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_f1 = included.iter().sum::<f64>() / included.len() as f64;
    Ok(F1Report { per_class, macro_f1, confusion })
}

/// F1 of `positive` treating every other class as negative.
pub fn binary_f1(predictions: &[usize], labels: &[usize], positive: usize) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::Contract(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p == positive, l == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fne;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

/// Model-selection metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(Default)]
pub enum Metric {
    #[default]
    Macro,
    /// One class against the rest, e.g. paddy vs non-paddy.
    Binary(String),
}


impl Metric {
    /// `macro`, or a class name for the one-vs-rest mode.
    pub fn parse(s: &str) -> Self {
        if s == "macro" {
            Metric::Macro
        } else {
            Metric::Binary(s.to_string())
        }
    }

    pub fn score(&self, predictions: &[usize], labels: &[usize], classes: &[String]) -> Result<f64> {
        match self {
            Metric::Macro => Ok(macro_f1(predictions, labels, classes.len())?.macro_f1),
            Metric::Binary(name) => {
                let pos = classes.iter().position(|c| c == name).ok_or_else(|| Error::Usage(format!("metric class {name:?} not among {classes:?}")))?;
                binary_f1(predictions, labels, pos)
            }
        }
    }
}
