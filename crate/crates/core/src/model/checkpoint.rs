//! Single-file parameter archive.
//!
//! ```text
//! b"GSANCKPT" | u64 LE manifest length | manifest JSON | raw LE payloads
//! ```
//!
//! Payload offsets in the manifest are relative to the first payload byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::GsanConfig;
use super::params::GsanParams;
use crate::error::{GsanError, Result};
use crate::tensor::{Real, Tensor, DTYPE};

pub const MAGIC: &[u8; 8] = b"GSANCKPT";
pub const FORMAT: &str = "gsan-ckpt-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub nbytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub dtype: String,
    pub in_features: usize,
    pub n_out: usize,
    /// Full run configuration; the model fields deserialize as [`GsanConfig`].
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub model: GsanConfig,
    pub params: GsanParams<Tensor>,
}

fn width(dtype: &str) -> Option<usize> {
    match dtype {
        "f64" => Some(8),
        "f32" => Some(4),
        _ => None,
    }
}

/// Writes `params` together with the configuration echo `config`.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    config: &serde_json::Value,
    params: &GsanParams<Tensor>,
    in_features: usize,
    n_out: usize,
) -> Result<()> {
    let path = path.as_ref();
    let mut payload = Vec::new();
    let mut tensors = Vec::new();
    for (name, _, t) in params.entries() {
        let offset = payload.len();
        for &v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset,
            nbytes: payload.len() - offset,
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        dtype: DTYPE.into(),
        in_features,
        n_out,
        config: config.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut bytes = Vec::with_capacity(16 + json.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).map_err(|e| GsanError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| GsanError::io(path, e))?;
    let bad = |m: String| GsanError::format(path, m);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body_start = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated manifest".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[16..body_start]).map_err(|e| bad(format!("manifest: {}", e)))?;
    if manifest.format != FORMAT {
        return Err(bad(format!("unsupported format {:?}", manifest.format)));
    }
    let w = width(&manifest.dtype).ok_or_else(|| bad(format!("unsupported dtype {:?}", manifest.dtype)))?;
    let model: GsanConfig =
        serde_json::from_value(manifest.config.clone()).map_err(|e| bad(format!("config echo: {}", e)))?;
    let template = GsanParams::init(
        &model,
        manifest.in_features,
        manifest.n_out,
        &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
    )?;
    let payload = &bytes[body_start..];
    let params = template.try_map(|name, _, t| {
        let entry = manifest
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| bad(format!("missing tensor {}", name)))?;
        if entry.shape != t.shape() {
            return Err(bad(format!("tensor {} has shape {:?}, expected {:?}", name, entry.shape, t.shape())));
        }
        let count: usize = entry.shape.iter().product();
        let end = entry.offset.checked_add(entry.nbytes).filter(|&e| e <= payload.len());
        if entry.nbytes != count * w || end.is_none() {
            return Err(bad(format!("tensor {} payload out of bounds", name)));
        }
        let raw = &payload[entry.offset..entry.offset + entry.nbytes];
        let data: Vec<Real> = raw
            .chunks_exact(w)
            .map(|c| match w {
                8 => f64::from_le_bytes(c.try_into().expect("8 bytes")) as Real,
                _ => f32::from_le_bytes(c.try_into().expect("4 bytes")) as Real,
            })
            .collect();
        Tensor::new(entry.shape.clone(), data)
    })?;
    if manifest.tensors.len() != template.len() {
        return Err(bad(format!(
            "{} tensors stored, model has {}",
            manifest.tensors.len(),
            template.len()
        )));
    }
    Ok(Checkpoint {
        manifest,
        model,
        params,
    })
}
