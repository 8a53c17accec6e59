//! Weights archive: a small binary container of named f32 tensors.
//!
//! ```text
//! magic "RPWGT001" | u32 version | u32 manifest length | manifest (TOML)
//! u32 tensor count | per tensor: u16 name length, name, u8 rank, u32 dims...,
//!                    u8 dtype (0 = f32 little-endian), u64 byte offset
//! tensor data, offsets relative to the start of this section
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::ModelWeights;
use crate::error::{Error, Result};
use crate::features::FeatureSubset;

const MAGIC: &[u8; 8] = b"RPWGT001";
const VERSION: u32 = 1;
const DTYPE_F32LE: u8 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    pub epochs: usize,
    pub data_hash: String,
    pub feature_subset: FeatureSubset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model: ModelConfig,
    pub training: Provenance,
}

pub fn encode_weights(w: &ModelWeights, prov: &Provenance) -> Result<Vec<u8>> {
    let manifest = toml::to_string(&Manifest {
        model: w.config.clone(),
        training: prov.clone(),
    })
    .map_err(|e| Error::Model(format!("cannot encode manifest: {e}")))?;
    let tensors = w.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(manifest.as_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for t in &tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(DTYPE_F32LE);
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.data.len() as u64;
    }
    for t in &tensors {
        for &v in t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Structure("weights archive is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<(ModelWeights, Manifest)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Structure("not a weights archive (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Structure(format!("unsupported weights archive version {version}")));
    }
    let mlen = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(mlen)?).map_err(|_| Error::Structure("manifest is not UTF-8".into()))?;
    let manifest: Manifest = toml::from_str(text).map_err(|e| Error::Structure(format!("bad manifest: {e}")))?;
    manifest.model.validate()?;
    let count = r.u32()? as usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = r.u16()? as usize;
        let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|_| Error::Structure("tensor name is not UTF-8".into()))?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let dtype = r.u8()?;
        if dtype != DTYPE_F32LE {
            return Err(Error::Structure(format!("tensor {name}: unsupported dtype {dtype}")));
        }
        let offset = r.u64()? as usize;
        table.push((name, shape, offset));
    }
    let data = &bytes[r.pos..];

    let mut w = ModelWeights::zeros(&manifest.model);
    let expected: Vec<(String, Vec<usize>)> = w.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    if expected.len() != table.len() {
        return Err(Error::Structure(format!(
            "archive holds {} tensors, model needs {}",
            table.len(),
            expected.len()
        )));
    }
    for (t, (name, shape)) in w.tensors_mut().into_iter().zip(expected) {
        let (_, s, offset) = table
            .iter()
            .find(|(n, _, _)| *n == name)
            .ok_or_else(|| Error::Structure(format!("tensor {name} missing from archive")))?;
        if *s != shape {
            return Err(Error::Structure(format!("tensor {name}: shape {s:?}, expected {shape:?}")));
        }
        let n = t.data.len();
        let raw = data
            .get(*offset..offset + 4 * n)
            .ok_or_else(|| Error::Structure(format!("tensor {name}: data out of range")))?;
        for (v, chunk) in t.data.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
    }
    if !w.is_finite() {
        return Err(Error::Structure("weights archive contains non-finite values".into()));
    }
    Ok((w, manifest))
}

pub fn save_weights(path: impl AsRef<Path>, w: &ModelWeights, prov: &Provenance) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(w, prov)?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<(ModelWeights, Manifest)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prov() -> Provenance {
        Provenance {
            seed: 7,
            epochs: 3,
            data_hash: "abc".into(),
            feature_subset: FeatureSubset::Full,
        }
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let cfg = ModelConfig {
            embed_dim: 16,
            heads: 4,
            ff_dim: 32,
            layers: 2,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = ModelWeights::init(&cfg, &mut rng).unwrap();
        let bytes = encode_weights(&w, &prov()).unwrap();
        let (back, manifest) = decode_weights(&bytes).unwrap();
        assert_eq!(manifest.training, prov());
        assert_eq!(manifest.model, cfg);
        for (a, b) in w.tensors().iter().zip(back.tensors().iter()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.data.iter().zip(b.data) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        assert_eq!(encode_weights(&back, &prov()).unwrap(), bytes);
    }

    #[test]
    fn truncated_archive_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = ModelWeights::init(&ModelConfig::default(), &mut rng).unwrap();
        let bytes = encode_weights(&w, &prov()).unwrap();
        assert!(decode_weights(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_weights(b"nonsense").is_err());
    }
}
