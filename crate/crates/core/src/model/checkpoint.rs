//! Checkpoint archives: the magic `TDTA`, a little-endian `u32` manifest
//! length, a JSON manifest (model config plus a named index into the
//! record section), then the concatenated TDT records.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiTParams, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::io::{decode, encode};
use crate::tensor::{Element, Tensor};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"TDTA";
const FORMAT: &str = "tdt-archive-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub offset: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

pub fn encode_checkpoint<E: Element>(
    params: &DiTParams<E>,
    meta: &BTreeMap<String, String>,
) -> Vec<u8> {
    let mut records = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in params.named_tensors() {
        let bytes = encode(&t, &BTreeMap::new());
        tensors.push(TensorEntry {
            name,
            offset: records.len(),
            length: bytes.len(),
        });
        records.extend_from_slice(&bytes);
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        config: params.config.clone(),
        tensors,
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(8 + json.len() + records.len());
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&records);
    out
}

pub fn decode_checkpoint<E: Element>(bytes: &[u8]) -> Result<(DiTParams<E>, Manifest)> {
    if bytes.len() < 8 || &bytes[..4] != ARCHIVE_MAGIC {
        return Err(Error::Format("missing TDTA magic".into()));
    }
    let mlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let manifest: Manifest = serde_json::from_slice(
        bytes
            .get(8..8 + mlen)
            .ok_or_else(|| Error::Format("truncated manifest".into()))?,
    )
    .map_err(|e| Error::Format(format!("bad manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(Error::Format(format!("unknown archive format {:?}", manifest.format)));
    }
    let records = &bytes[8 + mlen..];
    let mut by_name: HashMap<&str, Tensor<E>> = HashMap::new();
    for entry in &manifest.tensors {
        let slice = records
            .get(entry.offset..entry.offset + entry.length)
            .ok_or_else(|| Error::Format(format!("record {} out of bounds", entry.name)))?;
        let (t, _, used) = decode::<E>(slice)?;
        if used != entry.length {
            return Err(Error::Format(format!("record {} has stray bytes", entry.name)));
        }
        by_name.insert(entry.name.as_str(), t);
    }
    let params = DiTParams::from_named(&manifest.config, |name| by_name.remove(name))?;
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Format(format!("unexpected tensor {extra} in checkpoint")));
    }
    Ok((params, manifest))
}

pub fn save_checkpoint<E: Element>(
    path: &Path,
    params: &DiTParams<E>,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    fs::write(path, encode_checkpoint(params, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<E: Element>(path: &Path) -> Result<(DiTParams<E>, Manifest)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = init_params::<f32>(&ModelConfig::micro(), 11).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("objective".into(), "flow".into());
        let bytes = encode_checkpoint(&p, &meta);
        let (q, manifest) = decode_checkpoint::<f32>(&bytes).unwrap();
        assert!(p.bit_eq(&q));
        assert_eq!(manifest.meta, meta);
        assert_eq!(encode_checkpoint(&q, &meta), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let p = init_params::<f32>(&ModelConfig::micro(), 11).unwrap();
        let bytes = encode_checkpoint(&p, &BTreeMap::new());
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_checkpoint::<f32>(b"TDT1xxxx").is_err());
    }
}
