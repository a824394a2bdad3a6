use chrono::NaiveDate;

use crate::datastore::sensor::Satellite;
use crate::error::{Error, Result};

/// One observation of one parcel: a `bands × height × width` reflectance grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStack {
    pub parcel_id: String,
    pub satellite: Satellite,
    pub date: NaiveDate,
    pub season_id: String,
    pub height: usize,
    pub width: usize,
    pub bands: Vec<String>,
    pub label: Option<String>,
    /// Band-major `[band][row][col]`.
    pub data: Vec<f32>,
}

impl BandStack {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, band: usize) -> &[f32] {
        let p = self.pixels();
        &self.data[band * p..(band + 1) * p]
    }

    /// Band vector of the pixel at flat index `px`.
    pub fn pixel(&self, px: usize) -> impl Iterator<Item = f32> + '_ {
        let p = self.pixels();
        (0..self.bands.len()).map(move |b| self.data[b * p + px])
    }

    pub fn band_position(&self, token: &str) -> Option<usize> {
        self.bands.iter().position(|b| b == token)
    }

    /// Checks the structural invariants: known, distinct band tokens of the
    /// stack's sensor, positive extents, matching payload length, finite values.
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.bands.is_empty() {
            return Err(Error::Invalid(format!(
                "{}: empty stack {}x{} with {} bands",
                self.parcel_id,
                self.height,
                self.width,
                self.bands.len()
            )));
        }
        let spec = self.satellite.spec();
        for (i, b) in self.bands.iter().enumerate() {
            if spec.band_index(b).is_none() {
                return Err(Error::UnknownBand { token: b.clone(), satellite: self.satellite.to_string() });
            }
            if self.bands[..i].contains(b) {
                return Err(Error::Invalid(format!("duplicate band {b:?}")));
            }
        }
        let expected = self.bands.len() * self.pixels();
        if self.data.len() != expected {
            return Err(Error::Invalid(format!("payload has {} values, expected {expected}", self.data.len())));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("{}: non-finite reflectance at value {i}", self.parcel_id)));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn stack(satellite: Satellite, bands: &[&str], h: usize, w: usize, data: Vec<f32>) -> BandStack {
        BandStack {
            parcel_id: "P001".into(),
            satellite,
            date: NaiveDate::from_ymd_opt(2019, 7, 1).unwrap(),
            season_id: "2019".into(),
            height: h,
            width: w,
            bands: bands.iter().map(|s| s.to_string()).collect(),
            label: Some("paddy".into()),
            data,
        }
    }
}
