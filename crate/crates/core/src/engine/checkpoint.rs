//! Parameter files: an 8-byte little-endian header length, a JSON header
//! listing every tensor's `(name, shape, offset)`, then all values as one
//! little-endian `f32` stream. Offsets count elements, not bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "augunlearn.params";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode(named: &[(&str, &Tensor<f32>)], meta: serde_json::Value) -> Result<Vec<u8>> {
    let mut offset = 0;
    let tensors = named
        .iter()
        .map(|(name, t)| {
            let entry = TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            };
            offset += t.numel();
            entry
        })
        .collect();
    let header = Header {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        meta,
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Serde(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + json.len() + 4 * offset);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in named {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<(Header, Vec<(String, Tensor<f32>)>)> {
    let bad = |reason: String| Error::Format {
        file: origin.to_path_buf(),
        reason,
    };
    if bytes.len() < 8 {
        return Err(bad("truncated header length".into()));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = bytes
        .get(8..8usize.saturating_add(hlen))
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.format != FORMAT_TAG || header.version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let payload = &bytes[8 + hlen..];
    if !payload.len().is_multiple_of(4) {
        return Err(bad("payload is not a whole number of f32 values".into()));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let numel: usize = e.shape.iter().product();
        let slice = values
            .get(e.offset..e.offset + numel)
            .ok_or_else(|| bad(format!("tensor {} exceeds payload", e.name)))?;
        let t = Tensor::new(e.shape.clone(), slice.to_vec()).map_err(|err| bad(err.to_string()))?;
        tensors.push((e.name.clone(), t));
    }
    Ok((header, tensors))
}

pub fn save(path: &Path, named: &[(&str, &Tensor<f32>)], meta: serde_json::Value) -> Result<()> {
    let bytes = encode(named, meta)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // write-then-rename so readers never observe a partial file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Header, Vec<(String, Tensor<f32>)>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let a = Tensor::new(vec![2, 2], vec![1.5, -0.0, f32::MIN_POSITIVE, 3.25]).unwrap();
        let b = Tensor::new(vec![3], vec![7.0, 8.0, 9.0]).unwrap();
        let bytes = encode(&[("a", &a), ("b", &b)], serde_json::json!({"k": 1})).unwrap();
        let (header, ts) = decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(header.tensors[1].offset, 4);
        assert_eq!(header.meta["k"], 1);
        assert_eq!(ts[0].1, a);
        assert_eq!(ts[1].1, b);
        assert_eq!(ts[0].1.data()[1].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let a = Tensor::new(vec![4], vec![1.0; 4]).unwrap();
        let bytes = encode(&[("a", &a)], serde_json::Value::Null).unwrap();
        let err = decode(&bytes[..bytes.len() - 4], Path::new("cut")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }
}
