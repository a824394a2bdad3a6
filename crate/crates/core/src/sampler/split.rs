//! Parcel-grouped test holdout and k-fold partitions.
//!
//! Splits operate on parcel ids, never on images, so every observation of a
//! parcel lands on the same side of every split.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Cells per axis of the coarse spatial grid used to spread the test set.
pub const GRID_CELLS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelInfo {
    pub parcel_id: String,
    pub label: String,
    /// Planar location (any consistent unit).
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub test_parcels: Vec<String>,
    pub folds: Vec<Vec<String>>,
}

impl SplitPlan {
    /// Parcels of every fold except `fold`.
    pub fn train_parcels(&self, fold: usize) -> BTreeSet<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }

    pub fn val_parcels(&self, fold: usize) -> BTreeSet<String> {
        self.folds[fold].iter().cloned().collect()
    }

    /// Every non-test parcel.
    pub fn development_parcels(&self) -> BTreeSet<String> {
        self.folds.iter().flatten().cloned().collect()
    }

    pub fn test_set(&self) -> BTreeSet<String> {
        self.test_parcels.iter().cloned().collect()
    }

    /// Checks that the folds partition the non-test parcels and avoid the test set.
    pub fn validate(&self) -> Result<()> {
        let test = self.test_set();
        let mut seen = BTreeSet::new();
        for (i, fold) in self.folds.iter().enumerate() {
            for p in fold {
                if test.contains(p) {
                    return Err(Error::Leakage { parcels: vec![format!("{p} (fold {i} and test)")] });
                }
                if !seen.insert(p.clone()) {
                    return Err(Error::Leakage { parcels: vec![format!("{p} (in two folds)")] });
                }
            }
        }
        Ok(())
    }
}

/// Splits `total` across strata proportionally to `sizes` by largest remainder.
/// Ties are broken by `order` (a seeded permutation of stratum indices).
fn apportion(sizes: &[usize], total: usize, order: &[usize]) -> Vec<usize> {
    let population: usize = sizes.iter().sum();
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / population as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = total - alloc.iter().sum::<usize>();
    let mut ranked: Vec<usize> = order.to_vec();
    ranked.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &i in ranked.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if alloc[i] < sizes[i] {
            alloc[i] += 1;
            remaining -= 1;
        }
    }
    alloc
}

fn grid_cell(p: &ParcelInfo, bounds: (f64, f64, f64, f64)) -> (usize, usize) {
    let (x0, x1, y0, y1) = bounds;
    let axis = |v: f64, lo: f64, hi: f64| {
        if hi <= lo {
            0
        } else {
            (((v - lo) / (hi - lo) * GRID_CELLS as f64) as usize).min(GRID_CELLS - 1)
        }
    };
    (axis(p.x, x0, x1), axis(p.y, y0, y1))
}

/// Chooses `test_count` parcels stratified by label, then by spatial grid cell
/// within each label. The remaining parcels go to a single development fold.
pub fn make_test_split(parcels: &[ParcelInfo], test_count: usize, seed_value: u64) -> Result<SplitPlan> {
    if test_count == 0 || test_count >= parcels.len() {
        return Err(Error::Contract(format!(
            "test count must be in 1..{} for {} parcels, got {test_count}",
            parcels.len(),
            parcels.len()
        )));
    }
    let ids: BTreeSet<&str> = parcels.iter().map(|p| p.parcel_id.as_str()).collect();
    if ids.len() != parcels.len() {
        return Err(Error::Invalid("duplicate parcel ids in split input".into()));
    }
    let bounds = parcels.iter().fold((f64::MAX, f64::MIN, f64::MAX, f64::MIN), |b, p| {
        (b.0.min(p.x), b.1.max(p.x), b.2.min(p.y), b.3.max(p.y))
    });
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::fnv1a("test-split")]));

    let mut by_label: BTreeMap<&str, BTreeMap<(usize, usize), Vec<&ParcelInfo>>> = BTreeMap::new();
    for p in parcels {
        by_label.entry(&p.label).or_default().entry(grid_cell(p, bounds)).or_default().push(p);
    }
    let label_sizes: Vec<usize> = by_label.values().map(|cells| cells.values().map(Vec::len).sum()).collect();
    let mut order: Vec<usize> = (0..label_sizes.len()).collect();
    order.shuffle(&mut rng);
    let label_quota = apportion(&label_sizes, test_count, &order);

    let mut test = Vec::with_capacity(test_count);
    for (cells, quota) in by_label.values().zip(label_quota) {
        let sizes: Vec<usize> = cells.values().map(Vec::len).collect();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.shuffle(&mut rng);
        let cell_quota = apportion(&sizes, quota, &order);
        for (members, q) in cells.values().zip(cell_quota) {
            let mut pool: Vec<&ParcelInfo> = members.clone();
            pool.shuffle(&mut rng);
            test.extend(pool.into_iter().take(q).map(|p| p.parcel_id.clone()));
        }
    }
    test.sort();
    let test_set: BTreeSet<&String> = test.iter().collect();
    let mut rest: Vec<String> = parcels.iter().map(|p| p.parcel_id.clone()).filter(|p| !test_set.contains(p)).collect();
    rest.sort();
    Ok(SplitPlan { seed: seed_value, test_parcels: test, folds: vec![rest] })
}

/// Label-stratified partition of `train` into `k` folds whose sizes differ by at most one.
pub fn make_kfold(train: &[ParcelInfo], k: usize, seed_value: u64) -> Result<Vec<Vec<String>>> {
    if k == 0 || k > train.len() {
        return Err(Error::Contract(format!("cannot make {k} folds from {} parcels", train.len())));
    }
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::fnv1a("kfold"), k as u64]));
    let mut by_label: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in train {
        by_label.entry(&p.label).or_default().push(&p.parcel_id);
    }
    let mut dealt = Vec::with_capacity(train.len());
    for members in by_label.values_mut() {
        members.sort_unstable();
        members.shuffle(&mut rng);
        dealt.extend(members.iter().copied());
    }
    let mut folds = vec![Vec::new(); k];
    for (i, p) in dealt.into_iter().enumerate() {
        folds[i % k].push(p.to_string());
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}

/// Test holdout followed by a k-fold partition of the remaining parcels.
pub fn make_split_plan(parcels: &[ParcelInfo], test_count: usize, k: usize, seed_value: u64) -> Result<SplitPlan> {
    let mut plan = make_test_split(parcels, test_count, seed_value)?;
    let test = plan.test_set();
    let rest: Vec<ParcelInfo> = parcels.iter().filter(|p| !test.contains(&p.parcel_id)).cloned().collect();
    plan.folds = make_kfold(&rest, k, seed_value)?;
    plan.validate()?;
    Ok(plan)
}
