use std::collections::BTreeMap;

use numcore::{Scalar, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Named weight tensors of one model plus how each was initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T: Scalar> {
    tensors: BTreeMap<String, Tensor<T>>,
    init: BTreeMap<String, String>,
}

impl<T: Scalar> Default for ParameterSet<T> {
    fn default() -> Self {
        ParameterSet { tensors: BTreeMap::new(), init: BTreeMap::new() }
    }
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<T>, init: impl Into<String>) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name {name:?}")));
        }
        self.tensors.insert(name.to_string(), tensor);
        self.init.insert(name.to_string(), init.into());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors.get(name).ok_or_else(|| Error::Contract(format!("no parameter named {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors.get_mut(name).ok_or_else(|| Error::Contract(format!("no parameter named {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn init_records(&self) -> &BTreeMap<String, String> {
        &self.init
    }

    pub fn set_init_records(&mut self, init: BTreeMap<String, String>) {
        self.init = init;
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(), init: self.init.clone() }
    }

    /// Puts every tensor on `tape`, as gradient-tracked leaves when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Bound<'t, T> {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), if trainable { tape.leaf(v.clone()) } else { tape.constant(v.clone()) }))
            .collect();
        Bound { vars }
    }

    pub(crate) fn kaiming(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?, format!("kaiming_uniform(fan_in={fan_in})"))
    }

    pub(crate) fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<()> {
        let init = if value == 0.0 { "zeros".to_string() } else { format!("constant({value})") };
        self.insert(name, Tensor::full(shape, T::of(value)), init)
    }

    /// Affine layer `name.w` of shape `(inp, out)` and bias `name.b`.
    pub(crate) fn linear(&mut self, name: &str, inp: usize, out: usize, bias: bool, rng: &mut ChaCha8Rng) -> Result<()> {
        self.kaiming(&format!("{name}.w"), &[inp, out], inp, rng)?;
        if bias {
            self.constant(&format!("{name}.b"), &[out], 0.0)?;
        }
        Ok(())
    }
}

/// Parameters placed on a tape for one forward pass.
pub struct Bound<'t, T: Scalar> {
    vars: BTreeMap<String, Var<'t, T>>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    pub fn get(&self, name: &str) -> Result<Var<'t, T>> {
        self.vars.get(name).copied().ok_or_else(|| Error::Contract(format!("no parameter named {name:?}")))
    }

    pub fn tape(&self) -> Result<&'t Tape<T>> {
        self.vars.values().next().map(|v| v.tape()).ok_or_else(|| Error::Contract("empty parameter set".into()))
    }

    /// Swaps in a different variable for `name`.
    pub fn replace(&mut self, name: &str, var: Var<'t, T>) -> Result<()> {
        match self.vars.get_mut(name) {
            Some(slot) => {
                *slot = var;
                Ok(())
            }
            None => Err(Error::Contract(format!("no parameter named {name:?}"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'t, T>)> + '_ {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// `x·W + b` with `b` optional.
    pub fn linear(&self, x: Var<'t, T>, name: &str) -> Result<Var<'t, T>> {
        let y = x.matmul(self.get(&format!("{name}.w"))?)?;
        match self.vars.get(&format!("{name}.b")) {
            Some(b) => Ok(y.add_row(*b)?),
            None => Ok(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParameterSet::<f32>::new();
        p.constant("a", &[2], 0.0).unwrap();
        assert!(matches!(p.constant("a", &[2], 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn kaiming_respects_bound() {
        let mut p = ParameterSet::<f64>::new();
        p.kaiming("w", &[10, 20], 10, &mut rng(1)).unwrap();
        let b = (0.6f64).sqrt();
        assert!(p.get("w").unwrap().data().iter().all(|v| v.abs() <= b));
        assert_eq!(p.init_records()["w"], "kaiming_uniform(fan_in=10)");
    }

    #[test]
    fn cast_roundtrip_keeps_values() {
        let mut p = ParameterSet::<f32>::new();
        p.kaiming("w", &[3, 3], 3, &mut rng(2)).unwrap();
        assert_eq!(p.cast::<f64>().cast::<f32>(), p);
    }
}
