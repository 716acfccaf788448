//! Dense-import directory: raw little-endian tensors plus a JSON manifest,
//! the bootstrap path into TQCK without depending on any external
//! checkpoint ecosystem.
//!
//! `manifest.json` at the directory root:
//!
//! ```json
//! {
//!   "tensors": [
//!     { "name": "block.0.linear1", "rows": 256, "cols": 64,
//!       "width": 4, "file": "block.0.linear1.bin" }
//!   ]
//! }
//! ```
//!
//! `width` is bytes per element (2, 4, or 8); tensor files hold
//! `rows * cols` raw little-endian reals of that width, row major.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Deserialize;
use tq_core::checkpoint::{RealWidth, TensorData};
use tq_core::{Error, WeightMatrix};

#[derive(Deserialize)]
struct Manifest {
    tensors: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct ManifestEntry {
    name: String,
    rows: usize,
    cols: usize,
    width: u8,
    file: String,
}

fn decode_values(bytes: &[u8], width: RealWidth) -> Vec<f64> {
    match width {
        RealWidth::F16 => bytes
            .chunks_exact(2)
            .map(|ch| half::f16::from_le_bytes([ch[0], ch[1]]).to_f64())
            .collect(),
        RealWidth::F32 => bytes
            .chunks_exact(4)
            .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()) as f64)
            .collect(),
        RealWidth::F64 => bytes
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
            .collect(),
    }
}

/// Load an import directory into a dense tensor map.
pub fn load_import_dir(dir: &Path) -> anyhow::Result<BTreeMap<String, TensorData>> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(Error::Io)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidRecord {
            name: manifest_path.display().to_string(),
            reason: format!("manifest parse error: {e}"),
        })?;

    let mut map = BTreeMap::new();
    for entry in manifest.tensors {
        let width = RealWidth::from_bytes(entry.width).ok_or_else(|| Error::InvalidRecord {
            name: entry.name.clone(),
            reason: format!("width must be 2, 4, or 8 bytes, got {}", entry.width),
        })?;
        let path = dir.join(&entry.file);
        let bytes = std::fs::read(&path)
            .map_err(Error::Io)
            .with_context(|| format!("reading {}", path.display()))?;
        let expected = entry.rows * entry.cols * width.bytes();
        if bytes.len() != expected {
            return Err(Error::InvalidRecord {
                name: entry.name.clone(),
                reason: format!("{} holds {} bytes, expected {expected}", entry.file, bytes.len()),
            }
            .into());
        }
        let matrix = WeightMatrix::new(entry.rows, entry.cols, decode_values(&bytes, width))?;
        let tensor = TensorData::dense(matrix, width)?;
        if map.insert(entry.name.clone(), tensor).is_some() {
            return Err(Error::NameCollision { name: entry.name }.into());
        }
    }
    Ok(map)
}

/// A quantize input is either a TQCK file or an import directory.
pub fn load_input(path: &Path) -> anyhow::Result<BTreeMap<String, TensorData>> {
    if path.is_dir() {
        load_import_dir(path)
    } else {
        Ok(tq_core::read_checkpoint(path)?)
    }
}
