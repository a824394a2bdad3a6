use numcore::{Scalar, TensorError, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::params::{Bound, ParameterSet};

/// Two-block residual CNN with a two-layer fully connected head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub stem: usize,
    /// Output widths of the two residual blocks.
    pub blocks: [usize; 2],
    pub hidden: usize,
    pub classes: usize,
}

impl CnnConfig {
    pub fn new(in_channels: usize, height: usize, width: usize, classes: usize) -> Self {
        CnnConfig { in_channels, height, width, stem: 32, blocks: [32, 64], hidden: 32, classes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.height == 0 || self.width == 0 || self.classes == 0 {
            return Err(Error::Invalid(format!("degenerate CNN config {self:?}")));
        }
        Ok(())
    }
}

pub fn init_cnn<T: Scalar>(cfg: &CnnConfig, rng: &mut ChaCha8Rng) -> Result<ParameterSet<T>> {
    cfg.validate()?;
    let mut p = ParameterSet::new();
    conv_unit(&mut p, "cnn.stem", cfg.in_channels, cfg.stem, 3, rng)?;
    let mut width = cfg.stem;
    for (i, &out) in cfg.blocks.iter().enumerate() {
        let name = format!("cnn.block{}", i + 1);
        conv_unit(&mut p, &format!("{name}.a"), width, out, 3, rng)?;
        conv_unit(&mut p, &format!("{name}.b"), out, out, 3, rng)?;
        if out != width {
            p.kaiming(&format!("{name}.proj"), &[out, width, 1, 1], width, rng)?;
        }
        width = out;
    }
    p.linear("cnn.fc1", width, cfg.hidden, true, rng)?;
    p.linear("cnn.fc2", cfg.hidden, cfg.classes, true, rng)?;
    Ok(p)
}

fn conv_unit<T: Scalar>(p: &mut ParameterSet<T>, name: &str, inp: usize, out: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    p.kaiming(&format!("{name}.conv"), &[out, inp, k, k], inp * k * k, rng)?;
    p.constant(&format!("{name}.scale"), &[out], 1.0)?;
    p.constant(&format!("{name}.shift"), &[out], 0.0)
}

/// 3×3 same-padding convolution followed by the per-channel affine.
fn conv_affine<'t, T: Scalar>(p: &Bound<'t, T>, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let y = x.conv2d(p.get(&format!("{name}.conv"))?, 1, 1)?;
    Ok(y.channel_affine(p.get(&format!("{name}.scale"))?, p.get(&format!("{name}.shift"))?)?)
}

fn residual_block<'t, T: Scalar>(p: &Bound<'t, T>, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
    let h = conv_affine(p, &format!("{name}.a"), x)?.relu();
    let h = conv_affine(p, &format!("{name}.b"), h)?;
    let skip = match p.get(&format!("{name}.proj")) {
        Ok(w) => x.conv2d(w, 1, 0)?,
        Err(_) => x,
    };
    Ok(h.add(skip)?.relu())
}

/// Logits `(N, K)` for chips `(N, C_in, H, W)`.
pub fn cnn_forward<'t, T: Scalar>(p: &Bound<'t, T>, cfg: &CnnConfig, chips: Var<'t, T>) -> Result<Var<'t, T>> {
    let shape = chips.shape();
    let expected = [cfg.in_channels, cfg.height, cfg.width];
    if shape.len() != 4 || shape[1..] != expected {
        return Err(TensorError::Dimension { op: "cnn_forward", lhs: shape, rhs: expected.to_vec() }.into());
    }
    let mut h = conv_affine(p, "cnn.stem", chips)?.relu();
    for i in 1..=cfg.blocks.len() {
        h = residual_block(p, &format!("cnn.block{i}"), h)?;
    }
    let pooled = h.global_avg_pool()?;
    let hidden = p.linear(pooled, "cnn.fc1")?.relu();
    p.linear(hidden, "cnn.fc2")
}
