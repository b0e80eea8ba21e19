//! TDT tensor files.
//!
//! Layout: the magic bytes `TDT1`, a little-endian `u32` header length, a
//! UTF-8 JSON header `{"shape":[...],"dtype":"f32","order":"C"}` (plus an
//! optional `"meta"` string map), then the raw little-endian payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{numel, Element, Tensor};
use crate::error::{Error, Result};

pub const TDT_MAGIC: &[u8; 4] = b"TDT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdtHeader {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub order: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

pub fn encode<E: Element>(t: &Tensor<E>, meta: &BTreeMap<String, String>) -> Vec<u8> {
    let header = TdtHeader {
        shape: t.shape().to_vec(),
        dtype: E::DTYPE.to_string(),
        order: "C".to_string(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + t.numel() * E::BYTES);
    out.extend_from_slice(TDT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

/// Decodes one record from the front of `bytes`; returns the tensor (in
/// the requested element type), its header, and the bytes consumed.
pub fn decode<E: Element>(bytes: &[u8]) -> Result<(Tensor<E>, TdtHeader, usize)> {
    if bytes.len() < 8 || &bytes[..4] != TDT_MAGIC {
        return Err(Error::Format("missing TDT1 magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes
        .get(8..8 + hlen)
        .ok_or_else(|| Error::Format("truncated TDT header".into()))?;
    let header: TdtHeader = serde_json::from_slice(body)
        .map_err(|e| Error::Format(format!("bad TDT header: {e}")))?;
    if header.order != "C" {
        return Err(Error::Format(format!("unsupported order {:?}", header.order)));
    }
    let n = numel(&header.shape);
    let start = 8 + hlen;
    let data: Vec<E> = match header.dtype.as_str() {
        "f32" => read_payload::<f32>(bytes, start, n)?
            .into_iter()
            .map(|v| E::from_f64(v as f64))
            .collect(),
        "f64" => read_payload::<f64>(bytes, start, n)?
            .into_iter()
            .map(E::from_f64)
            .collect(),
        other => return Err(Error::Format(format!("unsupported dtype {other:?}"))),
    };
    let width = if header.dtype == "f32" { 4 } else { 8 };
    let t = Tensor::new(&header.shape, data)
        .map_err(|e| Error::Format(format!("bad TDT shape: {e}")))?;
    Ok((t, header, start + n * width))
}

fn read_payload<F: Element>(bytes: &[u8], start: usize, n: usize) -> Result<Vec<F>> {
    let end = start + n * F::BYTES;
    let payload = bytes
        .get(start..end)
        .ok_or_else(|| Error::Format("truncated TDT payload".into()))?;
    Ok(payload.chunks_exact(F::BYTES).map(F::read_le).collect())
}

pub fn write_tdt<E: Element>(path: &Path, t: &Tensor<E>) -> Result<()> {
    write_tdt_with_meta(path, t, &BTreeMap::new())
}

pub fn write_tdt_with_meta<E: Element>(
    path: &Path,
    t: &Tensor<E>,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    fs::write(path, encode(t, meta)).map_err(|e| Error::io(path, e))
}

pub fn read_tdt<E: Element>(path: &Path) -> Result<(Tensor<E>, TdtHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (t, h, used) = decode(&bytes)?;
    if used != bytes.len() {
        return Err(Error::Format(format!(
            "{}: {} trailing bytes",
            path.display(),
            bytes.len() - used
        )));
    }
    Ok((t, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_exact() {
        let t = Tensor::<f32>::from_f64(&[2], &[1.0, -2.0]).unwrap();
        let bytes = encode(&t, &BTreeMap::new());
        let json = br#"{"shape":[2],"dtype":"f32","order":"C"}"#;
        assert_eq!(&bytes[..4], b"TDT1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize, json.len());
        assert_eq!(&bytes[8..8 + json.len()], json);
        assert_eq!(&bytes[8 + json.len()..], &[0, 0, 128, 63, 0, 0, 0, 192]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode::<f32>(b"NOPE").is_err());
        let t = Tensor::<f32>::zeros(&[3]);
        let bytes = encode(&t, &BTreeMap::new());
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            dims in proptest::collection::vec(1usize..4, 0..4),
            seed in any::<u64>(),
        ) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor::<f32>::randn(&dims, 3.0, &mut rng);
            let mut meta = BTreeMap::new();
            meta.insert("k".to_string(), "v".to_string());
            let bytes = encode(&t, &meta);
            let (back, header, used) = decode::<f32>(&bytes).unwrap();
            prop_assert!(back.bit_eq(&t));
            prop_assert_eq!(header.meta, meta);
            prop_assert_eq!(used, bytes.len());
        }
    }
}
