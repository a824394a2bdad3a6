use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Double-logistic green-up / senescence curve, in days since sowing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phenology {
    pub v_min: f64,
    pub v_max: f64,
    /// Green-up inflection.
    pub t0: f64,
    pub k1: f64,
    /// Senescence inflection.
    pub t1: f64,
    pub k2: f64,
}

impl Phenology {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.v_min && self.v_min < self.v_max && self.v_max <= 1.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.t0 < self.t1;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid phenology parameters {self:?}")))
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `clamp(σ(k1(t−t0)) − σ(k2(t−t1)), 0, 1)`.
pub fn double_logistic(t: f64, p: &Phenology) -> f64 {
    (sigmoid(p.k1 * (t - p.t0)) - sigmoid(p.k2 * (t - p.t1))).clamp(0.0, 1.0)
}

/// Vegetation cover `v_min + f(t)·(v_max − v_min)`.
pub fn cover_fraction(t: f64, p: &Phenology) -> f64 {
    p.v_min + double_logistic(t, p) * (p.v_max - p.v_min)
}

/// Linear two-endmember mixture.
pub fn mix(cover: f64, soil: f64, veg: f64) -> f64 {
    (1.0 - cover) * soil + cover * veg
}
