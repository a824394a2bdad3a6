//! Synthetic multi-sensor parcel time series.

pub mod phenology;
pub mod profiles;
pub mod scene;

pub use phenology::{cover_fraction, double_logistic, mix, Phenology};
pub use profiles::{default_profiles, profile_by_name, soil_spectrum, zipf_weights, CropProfile, NUISANCE_BANDS};
pub use scene::{
    acquisition_days, block_mean, class_counts, generate_dataset, generate_parcel_series, manifest_path, parcels_path,
    project, DatasetSummary, NativeFrame, ParcelSeries, SceneConfig, NATIVE_GRID,
};
