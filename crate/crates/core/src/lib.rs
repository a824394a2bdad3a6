//! Multi-sensor crop-type classification.
//!
//! Band-stack storage and manifests ([`datastore`]), parcel-grouped splits and
//! pixel-set sequences ([`sampler`]), a synthetic phenology generator
//! ([`synthgen`]), the residual CNN and PSE-TAE classifiers ([`models`]),
//! focal-loss/Adadelta training with cross-validation ([`training`]), and the
//! command-line front end ([`cli`]).

pub mod cli;
pub mod datastore;
pub mod error;
pub mod models;
pub mod sampler;
mod fsutil;
pub mod seed;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
