//! Band-stack rasters, manifests and band-combination algebra.

pub mod bands;
pub mod bsf;
pub mod manifest;
pub mod resize;
pub mod sensor;
pub mod stack;
pub mod stats;

pub use bands::{parse_band_combination, select_bands, BandCombination};
pub use bsf::{read_bandstack, write_bandstack};
pub use manifest::{filter_manifest, write_manifest, DateWindow, Manifest, ManifestFilter, ManifestRecord};
pub use resize::resize_bilinear;
pub use sensor::{Satellite, SensorSpec, BAND_TOKENS};
pub use stack::BandStack;
pub use stats::{fit_band_stats, BandStats, STD_FLOOR};
