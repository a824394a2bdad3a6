//! Finite-difference verification of tape gradients (64-bit only).

use crate::error::TensorError;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the coordinate with the largest error.
    pub worst_index: usize,
    pub checked: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub pass: bool,
}

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks every coordinate of `x`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64, tol: f64) -> Result<GradCheckReport, TensorError>
where
    F: for<'t> Fn(Var<'t, f64>) -> Result<Var<'t, f64>, TensorError>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    grad_check_at(f, x, &coords, eps, tol)
}

/// Checks only the listed flat coordinates of `x`.
pub fn grad_check_at<F>(f: F, x: &Tensor<f64>, coords: &[usize], eps: f64, tol: f64) -> Result<GradCheckReport, TensorError>
where
    F: for<'t> Fn(Var<'t, f64>) -> Result<Var<'t, f64>, TensorError>,
{
    let analytic_full = {
        let tape = Tape::new();
        let leaf = tape.leaf(x.clone());
        let out = f(leaf)?;
        tape.backward(out)?.get_or_zeros(leaf)
    };
    let eval = |probe: Tensor<f64>| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let out = f(tape.constant(probe))?;
        let v = out.value();
        if !v.is_scalar() {
            return Err(TensorError::contract("grad_check", format!("f must be scalar, got {:?}", v.shape())));
        }
        Ok(v.item())
    };

    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    let (mut max_rel_error, mut worst_index) = (0.0f64, coords.first().copied().unwrap_or(0));
    for &i in coords {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let num = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let ana = analytic_full.data()[i];
        let err = relative_error(ana, num);
        if err > max_rel_error || err.is_nan() {
            max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            worst_index = i;
        }
        analytic.push(ana);
        numeric.push(num);
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        checked: coords.to_vec(),
        analytic,
        numeric,
        pass: max_rel_error <= tol,
    })
}
