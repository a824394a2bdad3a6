use chrono::{Datelike, NaiveDate};

use crate::datastore::BandStack;
use crate::error::{Error, Result};
use crate::sampler::pixelset::sample_pixel_set;
use crate::seed;

/// One parcel-season as a date-ordered sequence of pixel sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub parcel_id: String,
    pub season_id: String,
    pub label: usize,
    pub max_len: usize,
    pub n: usize,
    pub bands: usize,
    /// `max_len × n × bands`; padded steps are zero.
    pub values: Vec<f32>,
    /// Valid steps are front-packed.
    pub mask: Vec<bool>,
    /// Sequence index of every valid step (0, 1, 2, ...).
    pub positions: Vec<usize>,
    pub dates: Vec<NaiveDate>,
}

impl SequenceSample {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Source indices kept when `count` observations exceed `max_len`:
/// `floor(i·count/max_len)` for `i` in `0..max_len`.
pub fn subsample_indices(count: usize, max_len: usize) -> Vec<usize> {
    if count <= max_len {
        return (0..count).collect();
    }
    (0..max_len).map(|i| i * count / max_len).collect()
}

/// Seed of the pixel set drawn for one observation.
pub fn observation_seed(seed_value: u64, parcel_id: &str, date: NaiveDate) -> u64 {
    seed::derive(seed_value, &[seed::fnv1a(parcel_id), date.num_days_from_ce() as u64])
}

/// Sorts observations by date, draws one pixel set per kept date and pads to `max_len`.
pub fn assemble_sequence(stacks: &[BandStack], label: usize, max_len: usize, n: usize, seed_value: u64) -> Result<SequenceSample> {
    let first = stacks.first().ok_or_else(|| Error::Contract("cannot assemble an empty sequence".into()))?;
    if max_len == 0 {
        return Err(Error::Contract("maximum sequence length must be positive".into()));
    }
    for s in stacks {
        if s.parcel_id != first.parcel_id || s.season_id != first.season_id || s.satellite != first.satellite {
            return Err(Error::Contract(format!(
                "sequence mixes {}/{}/{} with {}/{}/{}",
                first.parcel_id, first.season_id, first.satellite, s.parcel_id, s.season_id, s.satellite
            )));
        }
        if s.bands != first.bands {
            return Err(Error::Invalid(format!("{}: band layout changes within a sequence", s.parcel_id)));
        }
    }
    let mut order: Vec<&BandStack> = stacks.iter().collect();
    order.sort_by_key(|s| s.date);
    if let Some(w) = order.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::Invalid(format!("{}: two observations on {}", first.parcel_id, w[0].date)));
    }
    let kept = subsample_indices(order.len(), max_len);
    let bands = first.bands.len();
    let step = n * bands;
    let mut values = vec![0.0f32; max_len * step];
    let mut dates = Vec::with_capacity(kept.len());
    for (t, &src) in kept.iter().enumerate() {
        let stack = order[src];
        let set = sample_pixel_set(stack, n, observation_seed(seed_value, &stack.parcel_id, stack.date))?;
        values[t * step..(t + 1) * step].copy_from_slice(&set.values);
        dates.push(stack.date);
    }
    let len = kept.len();
    Ok(SequenceSample {
        parcel_id: first.parcel_id.clone(),
        season_id: first.season_id.clone(),
        label,
        max_len,
        n,
        bands,
        values,
        mask: (0..max_len).map(|t| t < len).collect(),
        positions: (0..len).collect(),
        dates,
    })
}
