use serde::{Deserialize, Serialize};

use crate::datastore::bands::{select_bands, BandCombination};
use crate::datastore::stack::BandStack;
use crate::error::{Error, Result};

/// Lower bound applied to fitted standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-band z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl BandStats {
    /// Population mean/std of every band over every pixel of `stacks`, which
    /// must already carry the same band layout.
    pub fn fit(stacks: &[&BandStack]) -> Result<Self> {
        let first = stacks.first().ok_or_else(|| Error::Contract("band statistics need a nonempty training set".into()))?;
        let nb = first.bands.len();
        let mut sum = vec![0.0f64; nb];
        let mut count = 0usize;
        for s in stacks {
            if s.bands != first.bands {
                return Err(Error::Invalid(format!("band layout {:?} differs from {:?}", s.bands, first.bands)));
            }
            for (b, acc) in sum.iter_mut().enumerate() {
                *acc += s.plane(b).iter().map(|&v| v as f64).sum::<f64>();
            }
            count += s.pixels();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0f64; nb];
        for s in stacks {
            for (b, acc) in sq.iter_mut().enumerate() {
                *acc += s.plane(b).iter().map(|&v| (v as f64 - mean[b]).powi(2)).sum::<f64>();
            }
        }
        let std = sq.iter().map(|s| (s / count as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(BandStats { mean, std })
    }

    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes a band-major buffer of `bands × pixels` values in place.
    pub fn apply(&self, data: &mut [f32]) {
        let pixels = data.len() / self.bands();
        for (b, plane) in data.chunks_exact_mut(pixels).enumerate() {
            let (m, s) = (self.mean[b], self.std[b]);
            for v in plane {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
    }

    /// Standardizes a pixel-major buffer (`... × bands`, band fastest) in place.
    pub fn apply_interleaved(&self, data: &mut [f32]) {
        for px in data.chunks_exact_mut(self.bands()) {
            for (b, v) in px.iter_mut().enumerate() {
                *v = ((*v as f64 - self.mean[b]) / self.std[b]) as f32;
            }
        }
    }
}

/// Fits statistics for `combo` over a training set.
pub fn fit_band_stats(stacks: &[BandStack], combo: &BandCombination) -> Result<BandStats> {
    let selected: Vec<BandStack> = stacks.iter().map(|s| select_bands(s, combo)).collect::<Result<_>>()?;
    let refs: Vec<&BandStack> = selected.iter().collect();
    BandStats::fit(&refs)
}
