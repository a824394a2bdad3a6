//! Default crop table.
//!
//! Vegetation spectra share nearly the same visible reflectance and differ
//! mainly in NIR and SWIR, and season lengths range from 90 to 360 days.

use serde::{Deserialize, Serialize};

use crate::datastore::BAND_TOKENS;
use crate::error::{Error, Result};
use crate::synthgen::phenology::Phenology;

/// Reflectance for each entry of [`BAND_TOKENS`].
pub type Spectrum = [f64; 16];

/// Bands whose values are not a surface mixture: they carry per-date
/// atmospheric or temperature levels unrelated to the crop.
pub const NUISANCE_BANDS: [&str; 4] = ["WATER-VAPOUR", "CIRRUS", "TIRS1", "TIRS2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropProfile {
    pub name: String,
    /// Inclusive day-of-year range for sowing.
    pub sowing_window: (u32, u32),
    pub season_days: u32,
    pub phenology: Phenology,
    pub vegetation: Spectrum,
    /// Relative per-parcel jitter of the vegetation spectrum.
    pub spectral_jitter: f64,
}

impl CropProfile {
    pub fn validate(&self) -> Result<()> {
        self.phenology.validate()?;
        if self.vegetation.iter().any(|v| !(0.0..=1.5).contains(v)) {
            return Err(Error::Invalid(format!("{}: endmember outside [0, 1.5]", self.name)));
        }
        if self.sowing_window.0 > self.sowing_window.1 || self.season_days == 0 {
            return Err(Error::Invalid(format!("{}: empty sowing window or season", self.name)));
        }
        Ok(())
    }
}

pub fn band_slot(token: &str) -> usize {
    BAND_TOKENS.iter().position(|b| *b == token).unwrap_or_else(|| panic!("unknown band token {token}"))
}

/// Builds a full spectrum from visible, NIR and SWIR anchors.
fn spectrum(b: f64, g: f64, r: f64, nir: f64, swir1: f64, swir2: f64) -> Spectrum {
    let mut s = [0.0; 16];
    let mut set = |t: &str, v: f64| s[band_slot(t)] = v;
    set("U-B", 0.9 * b);
    set("B", b);
    set("G", g);
    set("R", r);
    set("RED-EDGE1", r + 0.25 * (nir - r));
    set("RED-EDGE2", r + 0.6 * (nir - r));
    set("RED-EDGE3", r + 0.85 * (nir - r));
    set("NIR", nir);
    set("NARROW-NIR", 1.02 * nir);
    set("SWIR1", swir1);
    set("SWIR2", swir2);
    set("PAN", (b + g + r) / 3.0);
    // nuisance bands are overwritten per date
    s
}

pub fn soil_spectrum() -> Spectrum {
    spectrum(0.12, 0.15, 0.20, 0.28, 0.35, 0.30)
}

/// The five default crops, most common first.
pub fn default_profiles() -> Vec<CropProfile> {
    let p = |name: &str, sow: u32, days: u32, ph: Phenology, veg: Spectrum| CropProfile {
        name: name.to_string(),
        sowing_window: (sow - 15, sow + 15),
        season_days: days,
        phenology: ph,
        vegetation: veg,
        spectral_jitter: 0.05,
    };
    vec![
        p(
            "paddy",
            175,
            120,
            Phenology { v_min: 0.05, v_max: 0.90, t0: 30.0, k1: 0.12, t1: 100.0, k2: 0.15 },
            spectrum(0.040, 0.080, 0.050, 0.40, 0.15, 0.07),
        ),
        p(
            "sugarcane",
            40,
            360,
            Phenology { v_min: 0.05, v_max: 0.85, t0: 60.0, k1: 0.05, t1: 320.0, k2: 0.08 },
            spectrum(0.041, 0.082, 0.049, 0.50, 0.25, 0.12),
        ),
        p(
            "banana",
            120,
            300,
            Phenology { v_min: 0.10, v_max: 0.70, t0: 50.0, k1: 0.06, t1: 270.0, k2: 0.10 },
            spectrum(0.039, 0.079, 0.051, 0.45, 0.30, 0.18),
        ),
        p(
            "pulses",
            305,
            90,
            Phenology { v_min: 0.05, v_max: 0.60, t0: 20.0, k1: 0.20, t1: 70.0, k2: 0.20 },
            spectrum(0.042, 0.081, 0.052, 0.35, 0.28, 0.20),
        ),
        p(
            "other",
            230,
            150,
            Phenology { v_min: 0.05, v_max: 0.75, t0: 40.0, k1: 0.10, t1: 125.0, k2: 0.12 },
            spectrum(0.040, 0.078, 0.048, 0.55, 0.20, 0.10),
        ),
    ]
}

pub fn profile_by_name(name: &str) -> Result<CropProfile> {
    default_profiles()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Usage(format!("unknown crop {name:?}; known: paddy, sugarcane, banana, pulses, other")))
}

/// Zipf weights `1/rank^s` for `count` classes.
pub fn zipf_weights(count: usize, s: f64) -> Vec<f64> {
    (1..=count).map(|r| 1.0 / (r as f64).powf(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_pairwise_distance(bands: &[&str]) -> f64 {
        let profiles = default_profiles();
        let slots: Vec<usize> = bands.iter().map(|b| band_slot(b)).collect();
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..profiles.len() {
            for j in i + 1..profiles.len() {
                let d: f64 = slots.iter().map(|&s| (profiles[i].vegetation[s] - profiles[j].vegetation[s]).powi(2)).sum();
                total += d.sqrt();
                pairs += 1;
            }
        }
        total / pairs as f64
    }

    #[test]
    fn profiles_are_valid() {
        for p in default_profiles() {
            p.validate().unwrap();
        }
    }

    #[test]
    fn nir_swir_separate_crops_better_than_visible() {
        let ir = mean_pairwise_distance(&["NIR", "SWIR1", "SWIR2"]);
        let vis = mean_pairwise_distance(&["R", "G", "B"]);
        assert!(ir > 10.0 * vis, "ir {ir} vis {vis}");
    }

    #[test]
    fn zipf_is_decreasing() {
        let w = zipf_weights(5, 1.0);
        assert_eq!(w[0], 1.0);
        assert!(w.windows(2).all(|p| p[0] > p[1]));
    }
}
