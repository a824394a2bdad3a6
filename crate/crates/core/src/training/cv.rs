use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Checkpoint, ModelKind};
use crate::sampler::SplitPlan;
use crate::seed::{derive, fnv1a};
use crate::training::data::Dataset;
use crate::training::fold::{evaluate, train_fold, write_run, Evaluation, Monitor, TrainConfig};
use crate::training::loss::AlphaPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub gamma: f64,
    pub alpha: AlphaPolicy,
}

/// γ ∈ {0, 1, 2, 5} × α ∈ {uniform, inverse-frequency}.
pub fn default_grid() -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for gamma in [0.0, 1.0, 2.0, 5.0] {
        for alpha in [AlphaPolicy::Uniform, AlphaPolicy::InverseFrequency] {
            grid.push(GridPoint { gamma, alpha });
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub point: GridPoint,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
    pub best_epochs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: Vec<GridScore>,
    pub selected: GridPoint,
    /// Epoch count of the final retrain: mean best epoch of the selected point's folds.
    pub final_epochs: usize,
    pub test: Evaluation,
    pub checkpoints: usize,
}

/// Highest mean score; ties go to the smaller γ, then the alpha policy name.
pub fn select(scores: &[GridScore]) -> Result<GridPoint> {
    scores
        .iter()
        .max_by(|a, b| {
            a.mean_score
                .total_cmp(&b.mean_score)
                .then(b.point.gamma.total_cmp(&a.point.gamma))
                .then(b.point.alpha.name().cmp(a.point.alpha.name()))
        })
        .map(|s| s.point)
        .ok_or_else(|| Error::Contract("empty hyperparameter grid".into()))
}

fn with_point(base: &TrainConfig, p: &GridPoint, seed: u64) -> TrainConfig {
    TrainConfig { gamma: p.gamma, alpha: p.alpha, seed, ..base.clone() }
}

/// Grid search over folds, retrain on all development parcels, score on test.
///
/// With `out_dir`, fold runs go to `g{i}/fold{k}` and the final model to `final`.
pub fn cross_validate(
    data: &Dataset,
    plan: &SplitPlan,
    kind: ModelKind,
    base: &TrainConfig,
    grid: &[GridPoint],
    out_dir: Option<&Path>,
) -> Result<(CvReport, Checkpoint)> {
    plan.validate()?;
    if grid.is_empty() {
        return Err(Error::Contract("empty hyperparameter grid".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    let mut checkpoints = 0;
    for (gi, point) in grid.iter().enumerate() {
        let mut fold_scores = Vec::new();
        let mut best_epochs = Vec::new();
        for fold in 0..plan.folds.len() {
            let train = data.subset(&plan.train_parcels(fold));
            let val = data.subset(&plan.val_parcels(fold));
            let cfg = with_point(base, point, derive(base.seed, &[fnv1a("fold"), fold as u64]));
            let outcome = train_fold(&train, Monitor::Validation(&val), kind, &cfg, Some(fold))?;
            if let Some(dir) = out_dir {
                write_run(&dir.join(format!("g{gi}/fold{fold}")), &cfg, &outcome)?;
            }
            checkpoints += 1;
            fold_scores.push(outcome.best_score.unwrap_or(0.0));
            best_epochs.push(outcome.best_epoch);
        }
        let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
        scores.push(GridScore { point: *point, fold_scores, mean_score, best_epochs });
    }
    let selected = select(&scores)?;
    let chosen = scores.iter().find(|s| s.point == selected).unwrap();
    let final_epochs = ((chosen.best_epochs.iter().sum::<usize>() as f64 / chosen.best_epochs.len() as f64).round() as usize).max(1);
    let cfg = TrainConfig { epochs: final_epochs, ..with_point(base, &selected, derive(base.seed, &[fnv1a("final")])) };
    let dev = data.subset(&plan.development_parcels());
    let outcome = train_fold(&dev, Monitor::Fixed, kind, &cfg, None)?;
    if let Some(dir) = out_dir {
        write_run(&dir.join("final"), &cfg, &outcome)?;
    }
    let test = evaluate(&outcome.checkpoint, &data.subset(&plan.test_set()), &base.metric)?;
    Ok((CvReport { grid: scores, selected, final_epochs, test, checkpoints }, outcome.checkpoint))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(gamma: f64, alpha: AlphaPolicy, mean: f64) -> GridScore {
        GridScore { point: GridPoint { gamma, alpha }, fold_scores: vec![mean], mean_score: mean, best_epochs: vec![1] }
    }

    #[test]
    fn selection_and_ties() {
        let s = [score(0.0, AlphaPolicy::Uniform, 0.5)];
        assert_eq!(select(&s).unwrap(), s[0].point);
        let s = [
            score(5.0, AlphaPolicy::Uniform, 0.7),
            score(1.0, AlphaPolicy::Uniform, 0.7),
            score(1.0, AlphaPolicy::InverseFrequency, 0.7),
            score(0.0, AlphaPolicy::Uniform, 0.6),
        ];
        assert_eq!(select(&s).unwrap(), GridPoint { gamma: 1.0, alpha: AlphaPolicy::InverseFrequency });
        assert_eq!(default_grid().len(), 8);
    }
}
