use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Every band token known to any sensor.
pub const BAND_TOKENS: [&str; 16] = [
    "U-B", "B", "G", "R", "RED-EDGE1", "RED-EDGE2", "RED-EDGE3", "NIR", "NARROW-NIR", "WATER-VAPOUR", "SWIR1",
    "SWIR2", "PAN", "CIRRUS", "TIRS1", "TIRS2",
];

const L8_BANDS: [&str; 11] = ["U-B", "B", "G", "R", "NIR", "SWIR1", "SWIR2", "PAN", "CIRRUS", "TIRS1", "TIRS2"];
const S2_BANDS: [&str; 12] = [
    "U-B", "B", "G", "R", "RED-EDGE1", "RED-EDGE2", "RED-EDGE3", "NIR", "NARROW-NIR", "WATER-VAPOUR", "SWIR1",
    "SWIR2",
];
const PS_BANDS: [&str; 4] = ["B", "G", "R", "NIR"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Satellite {
    L8,
    S2,
    PS,
}

/// Fixed per-sensor characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorSpec {
    pub satellite: Satellite,
    pub bands: &'static [&'static str],
    /// Average parcel chip size (height, width).
    pub chip: (usize, usize),
    /// Pixels per pixel set.
    pub pixel_set: usize,
    /// Maximum sequence length per parcel-season.
    pub max_len: usize,
    pub revisit_days: u32,
}

impl Satellite {
    pub const ALL: [Satellite; 3] = [Satellite::L8, Satellite::S2, Satellite::PS];

    pub fn spec(self) -> SensorSpec {
        match self {
            Satellite::L8 => SensorSpec {
                satellite: self,
                bands: &L8_BANDS,
                chip: (3, 3),
                pixel_set: 9,
                max_len: 41,
                revisit_days: 16,
            },
            Satellite::S2 => SensorSpec {
                satellite: self,
                bands: &S2_BANDS,
                chip: (7, 7),
                pixel_set: 49,
                max_len: 134,
                revisit_days: 5,
            },
            Satellite::PS => SensorSpec {
                satellite: self,
                bands: &PS_BANDS,
                chip: (19, 19),
                pixel_set: 300,
                max_len: 210,
                revisit_days: 1,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Satellite::L8 => "L8",
            Satellite::S2 => "S2",
            Satellite::PS => "PS",
        }
    }
}

impl SensorSpec {
    pub fn band_index(&self, token: &str) -> Option<usize> {
        self.bands.iter().position(|b| *b == token)
    }
}

impl fmt::Display for Satellite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Satellite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "L8" => Ok(Satellite::L8),
            "S2" => Ok(Satellite::S2),
            "PS" => Ok(Satellite::PS),
            other => Err(Error::Schema(format!("unknown satellite {other:?} (expected L8, S2 or PS)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensor_table_invariants() {
        let counts: Vec<usize> = Satellite::ALL.iter().map(|s| s.spec().bands.len()).collect();
        assert_eq!(counts, vec![11, 12, 4]);
        for sat in Satellite::ALL {
            let spec = sat.spec();
            assert!(spec.pixel_set > 0 && spec.max_len > 0);
            for b in spec.bands {
                assert!(BAND_TOKENS.contains(b), "{b}");
            }
        }
        let ps = Satellite::PS.spec();
        assert!(ps.pixel_set <= ps.chip.0 * ps.chip.1);
        assert_eq!(
            Satellite::ALL.map(|s| (s.spec().pixel_set, s.spec().max_len)),
            [(9, 41), (49, 134), (300, 210)]
        );
    }

    #[test]
    fn parses_names() {
        assert_eq!("S2".parse::<Satellite>().unwrap(), Satellite::S2);
        assert!("L7".parse::<Satellite>().is_err());
    }
}
