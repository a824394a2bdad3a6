use numcore::Tensor;

use crate::error::{Error, Result};
use crate::sampler::sequence::SequenceSample;

/// One model-ready image chip (`bands × height × width`).
#[derive(Debug, Clone, PartialEq)]
pub struct Chip {
    pub parcel_id: String,
    pub label: usize,
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct SequenceBatch {
    /// `(batch, max_len, n, bands)`.
    pub values: Tensor<f32>,
    /// `batch × max_len`, row-major.
    pub mask: Vec<bool>,
    /// `batch × max_len`; 0 on masked steps.
    pub positions: Vec<usize>,
    pub labels: Vec<usize>,
    pub weights: Option<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub struct ChipBatch {
    /// `(batch, bands, height, width)`.
    pub chips: Tensor<f32>,
    pub labels: Vec<usize>,
    pub weights: Option<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub enum SampleBatch {
    Sequences(SequenceBatch),
    Chips(ChipBatch),
}

impl SampleBatch {
    pub fn labels(&self) -> &[usize] {
        match self {
            SampleBatch::Sequences(b) => &b.labels,
            SampleBatch::Chips(b) => &b.labels,
        }
    }
}

impl SequenceBatch {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn max_len(&self) -> usize {
        self.values.shape()[1]
    }
}

pub fn stack_sequences(samples: &[&SequenceSample]) -> Result<SequenceBatch> {
    let first = samples.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
    let (t, n, b) = (first.max_len, first.n, first.bands);
    let mut values = Vec::with_capacity(samples.len() * t * n * b);
    let mut mask = Vec::with_capacity(samples.len() * t);
    let mut positions = Vec::with_capacity(samples.len() * t);
    for s in samples {
        if (s.max_len, s.n, s.bands) != (t, n, b) {
            return Err(Error::Invalid(format!(
                "inconsistent sequence shapes in batch: {:?} vs {:?}",
                (s.max_len, s.n, s.bands),
                (t, n, b)
            )));
        }
        values.extend_from_slice(&s.values);
        mask.extend_from_slice(&s.mask);
        positions.extend((0..t).map(|i| s.positions.get(i).copied().unwrap_or(0)));
    }
    Ok(SequenceBatch {
        values: Tensor::new(vec![samples.len(), t, n, b], values)?,
        mask,
        positions,
        labels: samples.iter().map(|s| s.label).collect(),
        weights: None,
    })
}

pub fn stack_chips(chips: &[&Chip]) -> Result<ChipBatch> {
    let first = chips.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
    let dims = (first.bands, first.height, first.width);
    let mut data = Vec::with_capacity(chips.len() * first.data.len());
    for c in chips {
        if (c.bands, c.height, c.width) != dims {
            return Err(Error::Invalid(format!("inconsistent chip shapes in batch: {:?} vs {dims:?}", (c.bands, c.height, c.width))));
        }
        data.extend_from_slice(&c.data);
    }
    Ok(ChipBatch {
        chips: Tensor::new(vec![chips.len(), dims.0, dims.1, dims.2], data)?,
        labels: chips.iter().map(|c| c.label).collect(),
        weights: None,
    })
}
