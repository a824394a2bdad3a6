//! Checkpoint directories: `meta.json` plus a `params.bin` tensor blob.
//!
//! The blob holds every tensor in sorted-name order as
//! `u32 name length, name bytes, u32 rank, u32 dims..., f32 values`, all little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use numcore::Tensor;
use serde::{Deserialize, Serialize};

use crate::datastore::{BandStats, Satellite};
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_atomic, write_json};
use crate::models::{ModelConfig, ParameterSet};

pub const META_FILE: &str = "meta.json";
pub const PARAMS_FILE: &str = "params.bin";
/// Prefix of optimizer state tensors stored next to the weights.
pub const STATE_PREFIX: &str = "optim/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
    pub satellite: Satellite,
    pub bands: Vec<String>,
    pub classes: Vec<String>,
    pub stats: BandStats,
    pub fold: Option<usize>,
    pub init: BTreeMap<String, String>,
    /// Resolved training configuration, stored verbatim.
    pub train: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParameterSet<f32>,
    pub state: BTreeMap<String, Tensor<f32>>,
}

pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>) -> Vec<u8> {
    let sorted: BTreeMap<&str, &Tensor<f32>> = tensors.into_iter().collect();
    let mut out = Vec::new();
    for (name, t) in sorted {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        out.extend((t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend((d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at + n).ok_or_else(|| Error::Truncated {
            path: self.path.to_path_buf(),
            expected: self.at + n,
            actual: self.bytes.len(),
        })?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<BTreeMap<String, Tensor<f32>>> {
    let mut cur = Cursor { bytes, at: 0, path };
    let format = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    let mut out = BTreeMap::new();
    while cur.at < bytes.len() {
        let name_len = cur.u32()?;
        let name = String::from_utf8(cur.take(name_len)?.to_vec()).map_err(|_| format("tensor name is not UTF-8".into()))?;
        let rank = cur.u32()?;
        let shape = (0..rank).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let data = cur.take(4 * count)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let tensor = Tensor::new(shape, data).map_err(|e| format(format!("{name}: {e}")))?;
        if out.insert(name.clone(), tensor).is_some() {
            return Err(format(format!("duplicate tensor {name}")));
        }
    }
    Ok(out)
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut meta = ckpt.meta.clone();
    meta.init = ckpt.params.init_records().clone();
    let prefixed: Vec<(String, &Tensor<f32>)> = ckpt.state.iter().map(|(k, v)| (format!("{STATE_PREFIX}{k}"), v)).collect();
    let blob = encode_tensors(ckpt.params.iter().chain(prefixed.iter().map(|(k, v)| (k.as_str(), *v))));
    write_atomic(&dir.join(PARAMS_FILE), &blob)?;
    write_json(&dir.join(META_FILE), &meta)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let meta: CheckpointMeta = read_json(&dir.join(META_FILE))?;
    let path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mut params = ParameterSet::new();
    let mut state = BTreeMap::new();
    for (name, t) in decode_tensors(&bytes, &path)? {
        match name.strip_prefix(STATE_PREFIX) {
            Some(rest) => {
                state.insert(rest.to_string(), t);
            }
            None => {
                let init = meta.init.get(&name).cloned().unwrap_or_default();
                params.insert(&name, t, init)?;
            }
        }
    }
    params.set_init_records(meta.init.clone());
    Ok(Checkpoint { meta, params, state })
}
