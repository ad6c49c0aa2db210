//! Versioned parameter checkpoints: a TOML manifest with the model metadata
//! and the ordered tensor table, plus a payload of 32-bit little-endian
//! floats stored next to it as `<manifest>.bin`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::params::Params;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "msdd-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest<M> {
    format: String,
    version: u32,
    payload: String,
    meta: M,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

pub fn payload_path(manifest: &Path) -> PathBuf {
    let mut name = manifest.as_os_str().to_owned();
    name.push(".bin");
    PathBuf::from(name)
}

fn tensor_table<P: Params>(params: &P) -> Vec<TensorEntry> {
    let mut out = Vec::new();
    let mut offset = 0;
    params.visit("", &mut |name, shape, data| {
        out.push(TensorEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
        });
        offset += data.len();
    });
    out
}

pub fn save_checkpoint<P: Params, M: Serialize>(path: &Path, params: &P, meta: &M) -> Result<()> {
    let payload = payload_path(path);
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        payload: payload
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        meta,
        tensors: tensor_table(params),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    let flat = params.flatten();
    let mut bytes = Vec::with_capacity(flat.len() * 4);
    for v in flat {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    fs::write(&payload, bytes).map_err(|e| Error::io(&payload, e))?;
    Ok(())
}

/// Reads only the metadata of a checkpoint.
pub fn read_checkpoint_meta<M: DeserializeOwned>(path: &Path) -> Result<M> {
    Ok(read_manifest::<M>(path)?.meta)
}

fn read_manifest<M: DeserializeOwned>(path: &Path) -> Result<Manifest<M>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest<M> = toml::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::Manifest(format!("unknown format {:?}", manifest.format)));
    }
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: manifest.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(manifest)
}

/// Loads a checkpoint; `build` creates an empty parameter set from the
/// metadata, whose tensor layout must match the stored table exactly.
pub fn load_checkpoint<P: Params, M: DeserializeOwned>(
    path: &Path,
    build: impl FnOnce(&M) -> Result<P>,
) -> Result<(P, M)> {
    let manifest = read_manifest::<M>(path)?;
    let mut params = build(&manifest.meta)?;
    let expected = tensor_table(&params);
    if expected != manifest.tensors {
        let first = expected
            .iter()
            .zip(&manifest.tensors)
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!("{} {:?} vs stored {} {:?}", a.name, a.shape, b.name, b.shape))
            .unwrap_or_else(|| {
                format!("{} tensors vs stored {}", expected.len(), manifest.tensors.len())
            });
        return Err(Error::ShapeMismatch(format!("checkpoint layout differs: {first}")));
    }
    let payload = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.payload);
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    let n = params.num_params();
    if bytes.len() != n * 4 {
        return Err(Error::PayloadLength {
            expected: n * 4,
            found: bytes.len(),
        });
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    params.assign_flat(&flat);
    Ok((params, manifest.meta))
}
