use numcore::{Scalar, Tensor, TensorError, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::params::{Bound, ParameterSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseConfig {
    pub bands: usize,
    pub mlp1: Vec<usize>,
    pub mlp2: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaeConfig {
    pub d_model: usize,
    pub heads: usize,
    pub d_k: usize,
    pub mlp3: usize,
    pub decoder: Vec<usize>,
    pub classes: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseTaeConfig {
    pub pse: PseConfig,
    pub tae: TaeConfig,
}

impl PseTaeConfig {
    pub fn new(bands: usize, classes: usize, max_len: usize) -> Self {
        PseTaeConfig {
            pse: PseConfig { bands, mlp1: vec![32, 64], mlp2: 128 },
            tae: TaeConfig { d_model: 128, heads: 4, d_k: 32, mlp3: 128, decoder: vec![64, 32], classes, max_len },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (p, t) = (&self.pse, &self.tae);
        let bad = |m: String| Err(Error::Invalid(m));
        if p.bands == 0 || p.mlp1.is_empty() || p.mlp1.contains(&0) {
            return bad(format!("degenerate pixel-set encoder {p:?}"));
        }
        if p.mlp2 != t.d_model {
            return bad(format!("encoder width {} differs from d_model {}", p.mlp2, t.d_model));
        }
        if t.heads * t.d_k != t.d_model || t.d_model % 2 != 0 {
            return bad(format!("heads·d_k must equal an even d_model, got {}·{} vs {}", t.heads, t.d_k, t.d_model));
        }
        if t.classes == 0 || t.max_len == 0 {
            return bad("classes and max_len must be positive".into());
        }
        Ok(())
    }
}

pub fn init_psetae<T: Scalar>(cfg: &PseTaeConfig, rng: &mut ChaCha8Rng) -> Result<ParameterSet<T>> {
    cfg.validate()?;
    let mut p = ParameterSet::new();
    let mut width = cfg.pse.bands;
    for (i, &out) in cfg.pse.mlp1.iter().enumerate() {
        p.linear(&format!("pse.mlp1.{i}"), width, out, true, rng)?;
        width = out;
    }
    p.linear("pse.mlp2", 2 * width, cfg.pse.mlp2, true, rng)?;
    let d = cfg.tae.d_model;
    p.linear("tae.q", d, d, true, rng)?;
    // a key bias shifts every score of a query equally and cannot affect the softmax
    p.linear("tae.k", d, d, false, rng)?;
    p.linear("tae.v", d, d, true, rng)?;
    p.linear("tae.mlp3", d, cfg.tae.mlp3, true, rng)?;
    let mut width = cfg.tae.mlp3;
    for (i, &out) in cfg.tae.decoder.iter().chain([&cfg.tae.classes]).enumerate() {
        p.linear(&format!("decoder.{i}"), width, out, true, rng)?;
        width = out;
    }
    Ok(p)
}

/// Sinusoidal encoding of a sequence index.
pub fn positional_encoding(position: usize, d_model: usize) -> Result<Vec<f64>> {
    if d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(Error::Contract(format!("positional encoding needs an even d_model, got {d_model}")));
    }
    let mut pe = Vec::with_capacity(d_model);
    for i in 0..d_model / 2 {
        let angle = position as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
        pe.push(angle.sin());
        pe.push(angle.cos());
    }
    Ok(pe)
}

/// Embeds pixel sets `(g, n, B)` into `(g, d)`, or `(b, T, n, B)` into `(b, T, d)`.
pub fn pse_forward<'t, T: Scalar>(p: &Bound<'t, T>, cfg: &PseConfig, sets: Var<'t, T>) -> Result<Var<'t, T>> {
    let shape = sets.shape();
    let (lead, n, bands) = match shape[..] {
        [g, n, b] => (vec![g], n, b),
        [b, t, n, bb] => (vec![b, t], n, bb),
        _ => return Err(TensorError::Dimension { op: "pse_forward", lhs: shape, rhs: vec![cfg.bands] }.into()),
    };
    if n == 0 {
        return Err(Error::Contract("pixel set is empty".into()));
    }
    if bands != cfg.bands {
        return Err(TensorError::Dimension { op: "pse_forward", lhs: shape, rhs: vec![cfg.bands] }.into());
    }
    let groups: usize = lead.iter().product();
    let mut h = sets.reshape(&[groups * n, bands])?;
    for i in 0..cfg.mlp1.len() {
        h = p.linear(h, &format!("pse.mlp1.{i}"))?.relu();
    }
    let width = *cfg.mlp1.last().unwrap();
    let per_set = h.reshape(&[groups, n, width])?;
    let pooled = Var::concat_cols(&[per_set.set_mean()?, per_set.set_std()?])?;
    let out = p.linear(pooled, "pse.mlp2")?;
    let mut out_shape = lead;
    out_shape.push(cfg.mlp2);
    Ok(out.reshape(&out_shape)?)
}

pub struct TaeOutput<'t, T: Scalar> {
    /// `(b, K)`.
    pub logits: Var<'t, T>,
    /// `(b, heads, T)`; exactly 0 on masked steps.
    pub attention: Tensor<T>,
}

/// The valid steps of one sample: embeddings `(L, d)` and their positions and
/// time indices.
struct Steps<'t, T: Scalar> {
    emb: Var<'t, T>,
    positions: Vec<usize>,
    steps: Vec<usize>,
}

fn valid_steps(mask: &[bool], batch: usize, len: usize) -> Result<Vec<Vec<usize>>> {
    if mask.len() != batch * len {
        return Err(Error::Contract(format!("mask has {} entries for {batch}×{len} steps", mask.len())));
    }
    (0..batch)
        .map(|i| {
            let v: Vec<usize> = (0..len).filter(|&t| mask[i * len + t]).collect();
            if v.is_empty() {
                Err(Error::Contract(format!("sample {i} has no valid time step")))
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Temporal attention over `(b, T, d)` embeddings.
pub fn tae_forward<'t, T: Scalar>(
    p: &Bound<'t, T>,
    cfg: &TaeConfig,
    emb: Var<'t, T>,
    mask: &[bool],
    positions: &[usize],
) -> Result<TaeOutput<'t, T>> {
    let shape = emb.shape();
    let [b, len, d] = shape[..] else {
        return Err(TensorError::Dimension { op: "tae_forward", lhs: shape, rhs: vec![cfg.d_model] }.into());
    };
    if d != cfg.d_model || positions.len() != b * len {
        return Err(TensorError::Dimension { op: "tae_forward", lhs: shape, rhs: vec![cfg.d_model] }.into());
    }
    let flat = emb.reshape(&[b * len, d])?;
    let mut samples = Vec::with_capacity(b);
    for (i, steps) in valid_steps(mask, b, len)?.into_iter().enumerate() {
        let rows: Vec<usize> = steps.iter().map(|t| i * len + t).collect();
        samples.push(Steps { emb: flat.gather_rows(&rows)?, positions: rows.iter().map(|&r| positions[r]).collect(), steps });
    }
    attend(p, cfg, samples, len)
}

fn attend<'t, T: Scalar>(p: &Bound<'t, T>, cfg: &TaeConfig, samples: Vec<Steps<'t, T>>, len: usize) -> Result<TaeOutput<'t, T>> {
    let (heads, dk, d) = (cfg.heads, cfg.d_k, cfg.d_model);
    let tape = p.tape()?;
    let inv_sqrt = T::of(1.0 / (dk as f64).sqrt());
    let mut attention = vec![T::zero(); samples.len() * heads * len];
    let mut pooled = Vec::with_capacity(samples.len());
    for (i, s) in samples.into_iter().enumerate() {
        let l = s.positions.len();
        let mut pe = Vec::with_capacity(l * d);
        for &pos in &s.positions {
            pe.extend(positional_encoding(pos, d)?.into_iter().map(T::of));
        }
        let x = s.emb.add(tape.constant(Tensor::new(vec![l, d], pe)?))?;
        let (q, k, v) = (p.linear(x, "tae.q")?, p.linear(x, "tae.k")?, p.linear(x, "tae.v")?);
        let averager = tape.constant(Tensor::full(&[1, l], T::one() / T::of(l as f64)));
        let master = averager.matmul(q)?;
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (lo, hi) = (h * dk, (h + 1) * dk);
            let scores = master.slice_cols(lo, hi)?.matmul(k.slice_cols(lo, hi)?.transpose()?)?.scale(inv_sqrt);
            let weights = scores.softmax(1)?;
            for (w, &t) in weights.value().data().iter().zip(&s.steps) {
                attention[(i * heads + h) * len + t] = *w;
            }
            outs.push(weights.matmul(v.slice_cols(lo, hi)?)?);
        }
        pooled.push(Var::concat_cols(&outs)?);
    }
    let batch = pooled.len();
    let mut h = p.linear(Var::concat_rows(&pooled)?, "tae.mlp3")?.relu();
    let layers = cfg.decoder.len() + 1;
    for i in 0..layers {
        h = p.linear(h, &format!("decoder.{i}"))?;
        if i + 1 < layers {
            h = h.relu();
        }
    }
    Ok(TaeOutput { logits: h, attention: Tensor::new(vec![batch, heads, len], attention)? })
}

/// Full model on `(b, T, n, B)` pixel sets; only valid steps are encoded.
pub fn psetae_forward<'t, T: Scalar>(
    p: &Bound<'t, T>,
    cfg: &PseTaeConfig,
    values: &Tensor<T>,
    mask: &[bool],
    positions: &[usize],
) -> Result<TaeOutput<'t, T>> {
    let shape = values.shape();
    let [b, len, n, bands] = shape[..] else {
        return Err(TensorError::Dimension { op: "psetae_forward", lhs: shape.to_vec(), rhs: vec![cfg.pse.bands] }.into());
    };
    if positions.len() != b * len {
        return Err(Error::Contract(format!("{} positions for {b}×{len} steps", positions.len())));
    }
    if len > cfg.tae.max_len {
        return Err(Error::Contract(format!("sequence length {len} exceeds max_len {}", cfg.tae.max_len)));
    }
    let valid = valid_steps(mask, b, len)?;
    let stride = n * bands;
    let total: usize = valid.iter().map(Vec::len).sum();
    let mut data = Vec::with_capacity(total * stride);
    for (i, steps) in valid.iter().enumerate() {
        for &t in steps {
            let at = (i * len + t) * stride;
            data.extend_from_slice(&values.data()[at..at + stride]);
        }
    }
    let tape = p.tape()?;
    let emb = pse_forward(p, &cfg.pse, tape.constant(Tensor::new(vec![total, n, bands], data)?))?;
    let mut samples = Vec::with_capacity(b);
    let mut start = 0;
    for (i, steps) in valid.into_iter().enumerate() {
        let rows: Vec<usize> = (start..start + steps.len()).collect();
        start += steps.len();
        let positions = steps.iter().map(|&t| positions[i * len + t]).collect();
        samples.push(Steps { emb: emb.gather_rows(&rows)?, positions, steps });
    }
    attend(p, &cfg.tae, samples, len)
}
