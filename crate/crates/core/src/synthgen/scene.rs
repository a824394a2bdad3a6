use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datastore::{write_bandstack, write_manifest, BandStack, ManifestRecord, Satellite};
use crate::error::{Error, Result};
use crate::fsutil::{write_atomic, write_json};
use crate::sampler::ParcelInfo;
use crate::seed::{derive, fnv1a, rng};
use crate::synthgen::phenology::{cover_fraction, mix};
use crate::synthgen::profiles::{band_slot, default_profiles, soil_spectrum, zipf_weights, CropProfile, NUISANCE_BANDS};

pub const NATIVE_GRID: usize = 19;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub parcels: usize,
    pub profiles: Vec<CropProfile>,
    /// Relative class frequencies, parallel to `profiles`.
    pub weights: Vec<f64>,
    pub satellites: Vec<Satellite>,
    pub noise: BTreeMap<Satellite, f64>,
    pub dropout: BTreeMap<Satellite, f64>,
    /// Extra per-pixel noise on the atmospheric and thermal bands.
    pub nuisance_noise: f64,
    /// Relative per-pixel spread of vegetation cover.
    pub cover_jitter: f64,
    pub grid: usize,
    pub year: i32,
    /// Side of the square the parcel locations are scattered over.
    pub extent: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let profiles = default_profiles();
        let weights = zipf_weights(profiles.len(), 1.0);
        SceneConfig {
            parcels: 172,
            profiles,
            weights,
            satellites: Satellite::ALL.to_vec(),
            noise: Satellite::ALL.iter().map(|&s| (s, 0.01)).collect(),
            dropout: Satellite::ALL.iter().map(|&s| (s, 0.1)).collect(),
            nuisance_noise: 0.05,
            cover_jitter: 0.1,
            grid: NATIVE_GRID,
            year: 2019,
            extent: 100.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.profiles.is_empty() || self.profiles.len() != self.weights.len() {
            return bad(format!("{} profiles but {} weights", self.profiles.len(), self.weights.len()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad(format!("crop weights must be positive, got {:?}", self.weights));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        for (sat, &d) in &self.dropout {
            if !(0.0..1.0).contains(&d) {
                return bad(format!("dropout for {sat} must lie in [0, 1), got {d}"));
            }
        }
        if self.noise.values().chain([&self.nuisance_noise, &self.cover_jitter]).any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise and jitter must be non-negative".into());
        }
        if self.grid != NATIVE_GRID {
            return bad(format!("native grid must be {NATIVE_GRID}, got {}", self.grid));
        }
        if self.parcels == 0 || self.satellites.is_empty() {
            return bad("need at least one parcel and one satellite".into());
        }
        Ok(())
    }

    fn noise_for(&self, sat: Satellite) -> f64 {
        self.noise.get(&sat).copied().unwrap_or(0.0)
    }

    fn dropout_for(&self, sat: Satellite) -> f64 {
        self.dropout.get(&sat).copied().unwrap_or(0.0)
    }
}

/// One native-grid day: all 16 band tokens, band-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NativeFrame {
    pub date: NaiveDate,
    pub day: u32,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParcelSeries {
    pub parcel_id: String,
    pub label: String,
    pub season_id: String,
    pub sowing: NaiveDate,
    pub frames: Vec<NativeFrame>,
}

/// Per-parcel draws shared by every date.
struct ParcelState {
    seed: u64,
    sowing: NaiveDate,
    cover_scale: Vec<f64>,
    vegetation: [f64; 16],
}

impl ParcelState {
    fn draw(profile: &CropProfile, config: &SceneConfig, seed: u64) -> Self {
        let mut r = rng(derive(seed, &[fnv1a("state")]));
        let (lo, hi) = profile.sowing_window;
        let doy = r.gen_range(lo..=hi).max(1);
        let sowing = NaiveDate::from_ymd_opt(config.year, 1, 1).unwrap() + Duration::days(doy as i64 - 1);
        let pixels = config.grid * config.grid;
        let cover_scale = (0..pixels).map(|_| 1.0 + config.cover_jitter * gauss(&mut r)).collect();
        let mut vegetation = profile.vegetation;
        for v in vegetation.iter_mut() {
            *v = (*v * (1.0 + profile.spectral_jitter * gauss(&mut r))).clamp(0.0, 1.5);
        }
        ParcelState { seed, sowing, cover_scale, vegetation }
    }

    /// Noiseless native frame for `day` days after sowing.
    fn frame(&self, profile: &CropProfile, day: u32) -> NativeFrame {
        let pixels = self.cover_scale.len();
        let soil = soil_spectrum();
        let base = cover_fraction(day as f64, &profile.phenology);
        let mut data = vec![0f32; 16 * pixels];
        let mut r = rng(derive(self.seed, &[fnv1a("nuisance"), day as u64]));
        let nuisance: Vec<(usize, f64)> = [("WATER-VAPOUR", 0.08, 0.03), ("CIRRUS", 0.02, 0.01), ("TIRS1", 0.30, 0.06), ("TIRS2", 0.28, 0.06)]
            .iter()
            .map(|&(t, mean, sd)| (band_slot(t), (mean + sd * gauss(&mut r)).max(0.0)))
            .collect();
        for b in 0..16 {
            let plane = &mut data[b * pixels..(b + 1) * pixels];
            if let Some(&(_, level)) = nuisance.iter().find(|(s, _)| *s == b) {
                plane.fill(level as f32);
                continue;
            }
            for (px, v) in plane.iter_mut().enumerate() {
                let cover = (base * self.cover_scale[px]).clamp(0.0, 1.0);
                *v = mix(cover, soil[b], self.vegetation[b]) as f32;
            }
        }
        NativeFrame { date: self.sowing + Duration::days(day as i64), day, data }
    }
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sample(r)
}

fn add_noise(values: &mut [f32], sigma: f64, r: &mut ChaCha8Rng) {
    if sigma > 0.0 {
        for v in values {
            *v = (*v as f64 + sigma * gauss(r)).clamp(0.0, 1.5) as f32;
        }
    }
}

fn parcel_seed(master: u64, parcel_id: &str) -> u64 {
    derive(master, &[fnv1a("parcel"), fnv1a(parcel_id)])
}

/// Daily native series over the whole season with the PS noise level applied.
pub fn generate_parcel_series(profile: &CropProfile, config: &SceneConfig, parcel_id: &str, seed: u64) -> Result<ParcelSeries> {
    profile.validate()?;
    let state = ParcelState::draw(profile, config, seed);
    let sigma = config.noise_for(Satellite::PS);
    let frames = (0..profile.season_days)
        .map(|day| {
            let mut f = state.frame(profile, day);
            add_noise(&mut f.data, sigma, &mut rng(derive(seed, &[fnv1a("native-noise"), day as u64])));
            f
        })
        .collect();
    Ok(ParcelSeries {
        parcel_id: parcel_id.to_string(),
        label: profile.name.clone(),
        season_id: state.sowing.year().to_string(),
        sowing: state.sowing,
        frames,
    })
}

/// Block edges `floor(i·n/out)` for `out` blocks over `n` cells.
pub fn block_edges(n: usize, out: usize) -> Vec<usize> {
    (0..=out).map(|i| i * n / out).collect()
}

/// Area-average of one `n×n` plane into `out×out` blocks.
pub fn block_mean(plane: &[f32], n: usize, out: usize) -> Vec<f32> {
    if out == n {
        return plane.to_vec();
    }
    let e = block_edges(n, out);
    let mut result = Vec::with_capacity(out * out);
    for bi in 0..out {
        for bj in 0..out {
            let mut sum = 0.0f64;
            for i in e[bi]..e[bi + 1] {
                for j in e[bj]..e[bj + 1] {
                    sum += plane[i * n + j] as f64;
                }
            }
            let count = (e[bi + 1] - e[bi]) * (e[bj + 1] - e[bj]);
            result.push((sum / count as f64) as f32);
        }
    }
    result
}

/// Projects a noiseless native frame onto a sensor's grid and band set.
pub fn project(frame: &NativeFrame, sat: Satellite, grid: usize) -> (usize, Vec<f32>) {
    let spec = sat.spec();
    let out = spec.chip.0;
    let pixels = grid * grid;
    let mut data = Vec::with_capacity(spec.bands.len() * out * out);
    for token in spec.bands {
        let slot = band_slot(token);
        data.extend(block_mean(&frame.data[slot * pixels..(slot + 1) * pixels], grid, out));
    }
    (out, data)
}

/// Days since sowing on which `sat` acquires, before dropout.
pub fn acquisition_days(sat: Satellite, season_days: u32) -> Vec<u32> {
    (0..season_days).step_by(sat.spec().revisit_days as usize).collect()
}

/// Exact per-class parcel counts by largest remainder.
pub fn class_counts(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub parcels: Vec<ParcelInfo>,
    pub records: BTreeMap<Satellite, usize>,
}

pub fn manifest_path(out_dir: &Path, sat: Satellite) -> std::path::PathBuf {
    out_dir.join(format!("{}.jsonl", sat.name()))
}

pub fn parcels_path(out_dir: &Path) -> std::path::PathBuf {
    out_dir.join("parcels.jsonl")
}

/// Writes band stacks, one manifest per satellite, `parcels.jsonl` and the
/// config used into `out_dir`.
pub fn generate_dataset(config: &SceneConfig, out_dir: &Path) -> Result<DatasetSummary> {
    config.validate()?;
    let counts = class_counts(&config.weights, config.parcels);
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    let mut layout = rng(derive(config.seed, &[fnv1a("layout")]));
    labels.shuffle(&mut layout);

    let mut manifests: BTreeMap<Satellite, Vec<ManifestRecord>> = config.satellites.iter().map(|&s| (s, Vec::new())).collect();
    let mut parcels = Vec::with_capacity(config.parcels);
    for (i, &class) in labels.iter().enumerate() {
        let profile = &config.profiles[class];
        let parcel_id = format!("P{:04}", i + 1);
        let (x, y) = (layout.gen_range(0.0..config.extent), layout.gen_range(0.0..config.extent));
        parcels.push(ParcelInfo { parcel_id: parcel_id.clone(), label: profile.name.clone(), x, y });

        let seed = parcel_seed(config.seed, &parcel_id);
        let state = ParcelState::draw(profile, config, seed);
        let season_id = state.sowing.year().to_string();
        let mut frames: BTreeMap<u32, NativeFrame> = BTreeMap::new();
        for (&sat, records) in manifests.iter_mut() {
            let tag = fnv1a(sat.name());
            let mut days = acquisition_days(sat, profile.season_days);
            let p = config.dropout_for(sat);
            let first = days[0];
            days.retain(|&d| rng(derive(seed, &[fnv1a("dropout"), tag, d as u64])).gen::<f64>() >= p);
            if days.is_empty() {
                days.push(first);
            }
            for day in days {
                let frame = frames.entry(day).or_insert_with(|| state.frame(profile, day));
                let (side, mut data) = project(frame, sat, config.grid);
                let mut noise_rng = rng(derive(seed, &[fnv1a("noise"), tag, day as u64]));
                add_noise(&mut data, config.noise_for(sat), &mut noise_rng);
                let plane = side * side;
                for (b, token) in sat.spec().bands.iter().enumerate() {
                    if NUISANCE_BANDS.contains(token) {
                        add_noise(&mut data[b * plane..(b + 1) * plane], config.nuisance_noise, &mut noise_rng);
                    }
                }
                let stack = BandStack {
                    parcel_id: parcel_id.clone(),
                    satellite: sat,
                    date: frame.date,
                    season_id: season_id.clone(),
                    height: side,
                    width: side,
                    bands: sat.spec().bands.iter().map(|b| b.to_string()).collect(),
                    label: Some(profile.name.clone()),
                    data,
                };
                let rel = format!("{}/{}/{}.bsf", sat.name(), parcel_id, frame.date);
                write_bandstack(&stack, &out_dir.join(&rel))?;
                records.push(ManifestRecord {
                    path: rel,
                    parcel_id: parcel_id.clone(),
                    satellite: sat,
                    date: frame.date,
                    season_id: season_id.clone(),
                    label: profile.name.clone(),
                    height: side,
                    width: side,
                });
            }
        }
    }

    for (&sat, records) in &manifests {
        write_manifest(&manifest_path(out_dir, sat), records)?;
    }
    let mut lines = String::new();
    for p in &parcels {
        lines.push_str(&serde_json::to_string(p).map_err(|e| Error::json(parcels_path(out_dir), e))?);
        lines.push('\n');
    }
    write_atomic(&parcels_path(out_dir), lines.as_bytes())?;
    write_json(&out_dir.join("scene.json"), config)?;
    Ok(DatasetSummary { parcels, records: manifests.iter().map(|(&s, r)| (s, r.len())).collect() })
}
