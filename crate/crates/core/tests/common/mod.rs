#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use croptype::datastore::{BandStack, Satellite};
use croptype::models::{Bound, ParameterSet};
use croptype::sampler::{ParcelInfo, SplitPlan};
use numcore::{grad_check_at, GradCheckReport, Tape, Tensor, TensorError, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tensor_err(e: croptype::Error) -> TensorError {
    match e {
        croptype::Error::Tensor(t) => t,
        other => TensorError::Contract { op: "model", msg: other.to_string() },
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Front-packed mask and sequence-index positions for the given lengths.
pub fn mask_for(lens: &[usize], max_len: usize) -> (Vec<bool>, Vec<usize>) {
    let mut mask = Vec::new();
    let mut pos = Vec::new();
    for &l in lens {
        for t in 0..max_len {
            mask.push(t < l);
            pos.push(if t < l { t } else { 0 });
        }
    }
    (mask, pos)
}

/// Gradient-checks `per_tensor` well-conditioned coordinates of every
/// parameter tensor of the scalar `sum(forward(p) ⊙ weights)`.
pub fn check_every_parameter<F>(params: &ParameterSet<f64>, forward: F, weights: &Tensor<f64>, per_tensor: usize, eps: f64, seed: u64) -> Vec<(String, GradCheckReport)>
where
    F: for<'t> Fn(&Bound<'t, f64>) -> croptype::Result<Var<'t, f64>>,
{
    let grads = {
        let tape = Tape::new();
        let bound = params.bind(&tape, true);
        let out = forward(&bound).unwrap();
        let total = out.mul(tape.constant(weights.clone())).unwrap().sum();
        let g = tape.backward(total).unwrap();
        bound.iter().map(|(name, v)| (name.to_string(), g.get_or_zeros(v))).collect::<Vec<_>>()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    for (name, g) in grads {
        let mut coords: Vec<usize> = (0..g.numel()).filter(|&i| g.data()[i].abs() >= 1e-3).collect();
        if coords.is_empty() {
            let best = (0..g.numel()).max_by(|&a, &b| g.data()[a].abs().total_cmp(&g.data()[b].abs())).unwrap();
            coords.push(best);
        }
        coords.shuffle(&mut rng);
        coords.truncate(per_tensor);
        let x = params.get(&name).unwrap().clone();
        let report = grad_check_at(
            |v| {
                let mut bound = params.bind(v.tape(), false);
                bound.replace(&name, v).map_err(tensor_err)?;
                let out = forward(&bound).map_err(tensor_err)?;
                Ok(out.mul(v.tape().constant(weights.clone()))?.sum())
            },
            &x,
            &coords,
            eps,
            1.0,
        )
        .unwrap();
        reports.push((name, report));
    }
    reports
}

/// Pins a closure to the higher-ranked signature the checks expect.
pub fn model_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&Bound<'t, f64>) -> croptype::Result<Var<'t, f64>>,
{
    f
}

/// Generated scene of `parcels` parcels for one satellite, loaded with every band.
pub fn scene(parcels: usize, satellite: croptype::datastore::Satellite, seed: u64) -> (tempfile::TempDir, croptype::training::Dataset) {
    use croptype::datastore::{BandCombination, Manifest, ManifestFilter};
    use croptype::synthgen::{generate_dataset, manifest_path, SceneConfig};
    let dir = tempfile::tempdir().unwrap();
    let cfg = SceneConfig { parcels, satellites: vec![satellite], seed, ..SceneConfig::default() };
    generate_dataset(&cfg, dir.path()).unwrap();
    let manifest = Manifest::load(&manifest_path(dir.path(), satellite)).unwrap();
    let classes = croptype::training::class_list(&manifest, satellite);
    let combo = BandCombination::full(&satellite.spec());
    let data = croptype::training::Dataset::load(&manifest, satellite, &combo, &ManifestFilter::default(), &classes).unwrap();
    (dir, data)
}

/// Reflectances plus the awkward bit patterns: signed zero, subnormals, extremes.
pub fn value(rng: &mut ChaCha8Rng) -> f32 {
    match rng.gen_range(0..10) {
        0 => -0.0,
        1 => f32::from_bits(rng.gen_range(1..0x0080_0000)),
        2 => f32::MAX * if rng.gen() { 1.0 } else { -1.0 },
        3 => f32::MIN_POSITIVE,
        _ => rng.gen_range(-0.2f32..1.2),
    }
}

pub fn random_stack(rng: &mut ChaCha8Rng) -> BandStack {
    let satellite = *Satellite::ALL.choose(rng).unwrap();
    let spec = satellite.spec();
    let mut bands: Vec<String> = spec.bands.iter().map(|b| b.to_string()).collect();
    bands.shuffle(rng);
    bands.truncate(rng.gen_range(1..=spec.bands.len()));
    let (height, width) = (rng.gen_range(1..7), rng.gen_range(1..7));
    let data = (0..height * width * bands.len()).map(|_| value(rng)).collect();
    BandStack {
        parcel_id: format!("P{:04}-ü", rng.gen_range(0..10_000)),
        satellite,
        date: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + chrono::Days::new(rng.gen_range(0..4000)),
        season_id: format!("{}", rng.gen_range(2015..2026)),
        height,
        width,
        bands,
        label: rng.gen_bool(0.7).then(|| ["paddy", "banana", "other \"x\""][rng.gen_range(0..3)].to_string()),
        data,
    }
}

pub fn bits(s: &BandStack) -> Vec<u32> {
    s.data.iter().map(|v| v.to_bits()).collect()
}

pub fn universe(rng: &mut ChaCha8Rng) -> Vec<ParcelInfo> {
    let n = rng.gen_range(2..220);
    let labels = rng.gen_range(1..8);
    let mut ids: Vec<usize> = (0..n * 3).collect();
    ids.shuffle(rng);
    ids[..n]
        .iter()
        .map(|&i| ParcelInfo {
            parcel_id: format!("F{i:05}"),
            // skewed label frequencies
            label: format!("crop{}", (rng.gen::<f64>().powi(2) * labels as f64) as usize),
            x: rng.gen_range(-50.0..50.0),
            y: if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1e4) },
        })
        .collect()
}

pub fn check_plan(parcels: &[ParcelInfo], plan: &SplitPlan, test_count: usize, k: usize) {
    let all: BTreeSet<&str> = parcels.iter().map(|p| p.parcel_id.as_str()).collect();
    let test: BTreeSet<&str> = plan.test_parcels.iter().map(String::as_str).collect();
    assert_eq!(test.len(), test_count);
    assert_eq!(plan.test_parcels.len(), test_count);
    assert!(test.is_subset(&all));
    assert_eq!(plan.folds.len(), k);

    let mut seen = BTreeSet::new();
    for fold in &plan.folds {
        for p in fold {
            assert!(!test.contains(p.as_str()), "{p} in test and a fold");
            assert!(seen.insert(p.as_str()), "{p} in two folds");
        }
    }
    let rest: BTreeSet<&str> = all.difference(&test).copied().collect();
    assert_eq!(seen, rest, "folds must cover the non-test parcels");

    let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");

    let label: BTreeMap<&str, &str> = parcels.iter().map(|p| (p.parcel_id.as_str(), p.label.as_str())).collect();
    let mut per_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, fold) in plan.folds.iter().enumerate() {
        for p in fold {
            per_label.entry(label[p.as_str()]).or_insert_with(|| vec![0; k])[i] += 1;
        }
    }
    for (l, counts) in per_label {
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "label {l}: {counts:?}");
    }

    for fold in 0..k {
        let train = plan.train_parcels(fold);
        let val = plan.val_parcels(fold);
        assert!(train.is_disjoint(&val));
        assert_eq!(train.len() + val.len(), rest.len());
    }
}

