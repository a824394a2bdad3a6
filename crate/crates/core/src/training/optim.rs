use std::collections::BTreeMap;

use numcore::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig { rho: 0.9, eps: 1e-6 }
    }
}

impl AdadeltaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) || !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Invalid(format!("Adadelta needs rho in [0,1) and eps > 0, got {self:?}")));
        }
        Ok(())
    }
}

/// Decayed accumulators `E[g²]` and `E[Δx²]` per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState<T: Scalar> {
    pub config: AdadeltaConfig,
    pub eg2: BTreeMap<String, Tensor<T>>,
    pub edx2: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> AdadeltaState<T> {
    pub fn new(config: AdadeltaConfig, params: &ParameterSet<T>) -> Result<Self> {
        config.validate()?;
        let zeros = || params.iter().map(|(k, v)| (k.to_string(), Tensor::zeros(v.shape()))).collect();
        Ok(AdadeltaState { config, eg2: zeros(), edx2: zeros() })
    }

    /// Flattened as `adadelta.eg2/<name>` and `adadelta.edx2/<name>`.
    pub fn to_tensors(&self) -> BTreeMap<String, Tensor<T>> {
        let eg2 = self.eg2.iter().map(|(k, v)| (format!("adadelta.eg2/{k}"), v.clone()));
        eg2.chain(self.edx2.iter().map(|(k, v)| (format!("adadelta.edx2/{k}"), v.clone()))).collect()
    }
}

/// One Adadelta update of every parameter that has a gradient.
///
/// Gradients are screened for NaN/∞ before anything is modified.
pub fn adadelta_step<T: Scalar>(params: &mut ParameterSet<T>, grads: &BTreeMap<String, Tensor<T>>, state: &mut AdadeltaState<T>) -> Result<()> {
    for (name, g) in grads {
        if let Some((index, v)) = g.data().iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { tensor: name.clone(), index, value: v.as_f64() as f32 });
        }
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(Error::Contract(format!("gradient {:?} does not match parameter {name} {:?}", g.shape(), p.shape())));
        }
    }
    let rho = T::of(state.config.rho);
    let one_minus = T::one() - rho;
    let eps = T::of(state.config.eps);
    for (name, g) in grads {
        let x = params.get_mut(name)?.data_mut();
        let eg2 = state.eg2.get_mut(name).ok_or_else(|| Error::Contract(format!("no optimizer state for {name}")))?.data_mut();
        let edx2 = state.edx2.get_mut(name).ok_or_else(|| Error::Contract(format!("no optimizer state for {name}")))?.data_mut();
        for i in 0..g.numel() {
            let gi = g.data()[i];
            eg2[i] = rho * eg2[i] + one_minus * gi * gi;
            let dx = -((edx2[i] + eps).sqrt() / (eg2[i] + eps).sqrt()) * gi;
            edx2[i] = rho * edx2[i] + one_minus * dx * dx;
            x[i] += dx;
        }
    }
    Ok(())
}
