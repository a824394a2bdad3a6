use std::fmt;

use crate::datastore::sensor::{SensorSpec, BAND_TOKENS};
use crate::datastore::stack::BandStack;
use crate::error::{Error, Result};

/// Ordered, duplicate-free list of band tokens, e.g. `NIR+SWIR1+SWIR2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BandCombination {
    tokens: Vec<String>,
}

impl BandCombination {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Schema("empty band combination".into()));
        }
        let mut out: Vec<String> = Vec::with_capacity(tokens.len());
        for t in tokens {
            let t = t.as_ref().trim();
            if !BAND_TOKENS.contains(&t) {
                return Err(Error::UnknownBand { token: t.to_string(), satellite: "any sensor".into() });
            }
            if out.iter().any(|o| o == t) {
                return Err(Error::Schema(format!("band {t:?} repeated in combination")));
            }
            out.push(t.to_string());
        }
        Ok(BandCombination { tokens: out })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split('+').collect();
        if parts.iter().any(|p| p.trim().is_empty()) {
            return Err(Error::Schema(format!("malformed band combination {text:?}")));
        }
        Self::new(&parts)
    }

    /// Every band of the sensor in canonical order.
    pub fn full(sensor: &SensorSpec) -> Self {
        BandCombination { tokens: sensor.bands.iter().map(|s| s.to_string()).collect() }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Indices into the sensor's canonical order, in combination order.
    pub fn indices(&self, sensor: &SensorSpec) -> Result<Vec<usize>> {
        self.tokens
            .iter()
            .map(|t| {
                sensor
                    .band_index(t)
                    .ok_or_else(|| Error::UnknownBand { token: t.clone(), satellite: sensor.satellite.to_string() })
            })
            .collect()
    }
}

impl fmt::Display for BandCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join("+"))
    }
}

/// Parses `TOK+TOK+...` and resolves each token against `sensor`.
pub fn parse_band_combination(text: &str, sensor: &SensorSpec) -> Result<(BandCombination, Vec<usize>)> {
    let combo = BandCombination::parse(text)?;
    let idx = combo.indices(sensor)?;
    Ok((combo, idx))
}

/// Projects a stack onto `combo`, planes in combination order.
pub fn select_bands(stack: &BandStack, combo: &BandCombination) -> Result<BandStack> {
    let idx: Vec<usize> = combo
        .tokens()
        .iter()
        .map(|t| {
            stack
                .band_position(t)
                .ok_or_else(|| Error::UnknownBand { token: t.clone(), satellite: stack.satellite.to_string() })
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(idx.len() * stack.pixels());
    for &i in &idx {
        data.extend_from_slice(stack.plane(i));
    }
    Ok(BandStack { bands: combo.tokens().to_vec(), data, ..stack.clone() })
}
