use rand::seq::index;
use rand::Rng;

use crate::datastore::BandStack;
use crate::error::{Error, Result};
use crate::seed;

/// Unordered sample of `n` pixel band-vectors from one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSet {
    pub n: usize,
    pub bands: usize,
    /// Pixel-major `n × bands`.
    pub values: Vec<f32>,
    /// Flat source pixel index of each row.
    pub source_index: Vec<usize>,
    pub source_pixels: usize,
    pub seed: u64,
}

/// Draws `n` distinct pixels when the stack has at least `n`; otherwise takes
/// every pixel once and fills the remaining rows uniformly with replacement.
pub fn sample_pixel_set(stack: &BandStack, n: usize, seed_value: u64) -> Result<PixelSet> {
    if n == 0 {
        return Err(Error::Contract("pixel set size must be positive".into()));
    }
    let pixels = stack.pixels();
    if pixels == 0 {
        return Err(Error::Contract(format!("{}: stack has no pixels", stack.parcel_id)));
    }
    let mut rng = seed::rng(seed_value);
    let source_index: Vec<usize> = if pixels >= n {
        index::sample(&mut rng, pixels, n).into_vec()
    } else {
        (0..pixels).chain((pixels..n).map(|_| rng.gen_range(0..pixels))).collect()
    };
    let bands = stack.bands.len();
    let mut values = Vec::with_capacity(n * bands);
    for &px in &source_index {
        values.extend(stack.pixel(px));
    }
    Ok(PixelSet { n, bands, values, source_index, source_pixels: pixels, seed: seed_value })
}
