//! Versioned parameter checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! bytes 0..8   magic "BSACCKPT"
//! bytes 8..12  format version (u32), currently 1
//! bytes 12..16 manifest length in bytes (u32)
//! manifest     JSON: {"meta": <arbitrary>, "params": [{"name", "shape"}...]}
//! payload      for each param in manifest order: numel f64 values, LE
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NumericsError, Result, Tensor};

const MAGIC: &[u8; 8] = b"BSACCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    meta: serde_json::Value,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn param(&self, name: &str) -> Result<&Tensor> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| corrupt(format!("missing parameter {name}")))
    }
}

fn corrupt(detail: impl Into<String>) -> NumericsError {
    NumericsError::Checkpoint { detail: detail.into() }
}

pub fn write_checkpoint(
    path: &Path,
    params: &[(String, &Tensor)],
    meta: &serde_json::Value,
) -> Result<()> {
    let manifest = Manifest {
        meta: meta.clone(),
        params: params
            .iter()
            .map(|(name, t)| ParamEntry { name: name.clone(), shape: t.shape.clone() })
            .collect(),
    };
    let manifest_bytes =
        serde_json::to_vec(&manifest).map_err(|e| corrupt(format!("manifest encode: {e}")))?;
    let payload_len: usize = params.iter().map(|(_, t)| t.data.len() * 8).sum();
    let mut out = Vec::with_capacity(16 + manifest_bytes.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest_bytes);
    for (_, t) in params {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| corrupt(format!("write {}: {e}", path.display())))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes =
        fs::read(path).map_err(|e| corrupt(format!("read {}: {e}", path.display())))?;
    if bytes.len() < 16 || &bytes[0..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let mlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + mlen {
        return Err(corrupt("truncated manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[16..16 + mlen])
        .map_err(|e| corrupt(format!("manifest decode: {e}")))?;
    let mut offset = 16 + mlen;
    let mut params = Vec::with_capacity(manifest.params.len());
    for entry in manifest.params {
        let numel: usize = entry.shape.iter().product();
        let end = offset + numel * 8;
        if bytes.len() < end {
            return Err(corrupt(format!("truncated payload at {}", entry.name)));
        }
        let data: Vec<f64> = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset = end;
        params.push((entry.name, Tensor::new(entry.shape, data)?));
    }
    if offset != bytes.len() {
        return Err(corrupt("trailing bytes after payload"));
    }
    Ok(Checkpoint { meta: manifest.meta, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = std::env::temp_dir().join("bsac_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.ckpt");

        let a = Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE, 0.0, 9.9])
            .unwrap();
        let b = Tensor::new(vec![1, 2], vec![-0.125, 7.0]).unwrap();
        let meta = json!({"env": "pendulum", "algorithm": "bsac"});
        write_checkpoint(
            &path,
            &[("policy.w0".to_string(), &a), ("policy.b0".to_string(), &b)],
            &meta,
        )
        .unwrap();

        let ck = read_checkpoint(&path).unwrap();
        assert_eq!(ck.meta, meta);
        assert_eq!(ck.param("policy.w0").unwrap().data, a.data);
        assert_eq!(ck.param("policy.b0").unwrap().shape, vec![1, 2]);
        assert!(ck.param("missing").is_err());
    }

    #[test]
    fn rejects_garbage() {
        let dir = std::env::temp_dir().join("bsac_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
