//! Named-tensor weight container.
//!
//! Little-endian layout: magic `SLST`, `u32` version (1), `u32` tensor
//! count, then per tensor a `u16` name length, the UTF-8 name, a `u8`
//! dtype (0 = f32, 1 = f64), a `u8` rank, `rank` × `u64` dimensions and
//! the row-major payload. Tensors are written as f64.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelWeights};
use crate::numerics::Tensor;

pub const WEIGHT_MAGIC: &[u8; 4] = b"SLST";
pub const WEIGHT_VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

pub fn encode_weights<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<Vec<u8>> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
    let count = u32::try_from(tensors.len()).map_err(|_| Error::WeightFormat("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| Error::WeightFormat(format!("name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F64);
        let rank = u8::try_from(t.rank()).map_err(|_| Error::WeightFormat(format!("{name}: rank too large")))?;
        out.push(rank);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::WeightFormat(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != WEIGHT_MAGIC {
        return Err(Error::WeightFormat("bad magic (expected SLST)".into()));
    }
    let version = c.u32("version")?;
    if version != WEIGHT_VERSION {
        return Err(Error::WeightFormat(format!("unsupported version {version}")));
    }
    let count = c.u32("tensor count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::WeightFormat("tensor name is not UTF-8".into()))?
            .to_string();
        let dtype = c.u8("dtype")?;
        let rank = c.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = c.u64("dimension")?;
            shape.push(usize::try_from(d).map_err(|_| Error::WeightFormat(format!("{name}: dimension too large")))?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::WeightFormat(format!("{name}: shape overflows")))?;
        let data: Vec<f64> = match dtype {
            DTYPE_F32 => c
                .take(numel * 4, &name)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
            DTYPE_F64 => c
                .take(numel * 8, &name)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
            other => return Err(Error::WeightFormat(format!("{name}: unknown dtype {other}"))),
        };
        let t = Tensor::new(shape, data).map_err(|e| Error::WeightFormat(format!("{name}: {e}")))?;
        out.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(Error::WeightFormat(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(out)
}

pub fn write_weights<'a>(path: &Path, tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
    fs::write(path, encode_weights(tensors)?).map_err(|e| Error::io(path, e))
}

pub fn read_weights(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes).map_err(|e| Error::WeightFormat(format!("{}: {e}", path.display())))
}

pub fn save_model(path: &Path, weights: &ModelWeights) -> Result<()> {
    let named = weights.named();
    write_weights(path, named.iter().map(|(n, t)| (n.as_str(), *t)))
}

/// Reads a weight file and checks it against `cfg`.
pub fn load_model(path: &Path, cfg: &ModelConfig) -> Result<ModelWeights> {
    ModelWeights::from_named(cfg, read_weights(path)?)
        .map_err(|e| Error::WeightFormat(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout() {
        let t = Tensor::matrix(1, 2, vec![1.0, -2.5]).unwrap();
        let bytes = encode_weights([("ab", &t)]).unwrap();
        let mut want = b"SLST".to_vec();
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&1u32.to_le_bytes());
        want.extend_from_slice(&2u16.to_le_bytes());
        want.extend_from_slice(b"ab");
        want.extend_from_slice(&[1, 2]);
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        want.extend_from_slice(&1.0f64.to_le_bytes());
        want.extend_from_slice(&(-2.5f64).to_le_bytes());
        assert_eq!(bytes, want);
    }

    #[test]
    fn reads_f32_payloads() {
        let mut bytes = b"SLST".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.push(b'w');
        bytes.extend_from_slice(&[0, 1]);
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&0.5f32.to_le_bytes());
        bytes.extend_from_slice(&3.0f32.to_le_bytes());
        let out = decode_weights(&bytes).unwrap();
        assert_eq!(out[0].0, "w");
        assert_eq!(out[0].1.data(), &[0.5, 3.0]);
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::vector(&[1.0, 2.0]).unwrap();
        let good = encode_weights([("w", &t)]).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode_weights(&bad_magic).is_err());
        assert!(decode_weights(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_weights(&extra).is_err());
        let mut version = good;
        version[4] = 2;
        assert!(decode_weights(&version).is_err());
    }

    #[test]
    fn file_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = Tensor::from_fn(&[3, 4], |i| (i as f64).sin() * 1e-7).unwrap();
        let b = Tensor::vector(&[f64::MIN_POSITIVE, -0.0, 1e300]).unwrap();
        let p1 = dir.path().join("a.slst");
        let p2 = dir.path().join("b.slst");
        write_weights(&p1, [("x", &a), ("y", &b)]).unwrap();
        let loaded = read_weights(&p1).unwrap();
        write_weights(&p2, loaded.iter().map(|(n, t)| (n.as_str(), t))).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(loaded[1].1.data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn model_round_trip() {
        use crate::temporal::Aggregator;
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::desk(Aggregator::Lstm, 3);
        let w = ModelWeights::init(&cfg, 5).unwrap();
        let (p1, p2) = (dir.path().join("a.slst"), dir.path().join("b.slst"));
        save_model(&p1, &w).unwrap();
        let back = load_model(&p1, &cfg).unwrap();
        assert_eq!(back.flatten(), w.flatten());
        save_model(&p2, &back).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        let err = load_model(&p1, &ModelConfig::desk(Aggregator::Mean, 3)).unwrap_err();
        assert!(err.to_string().contains("a.slst"), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(-1e6f64..1e6, 1..40), name in "[a-z._0-9]{1,20}") {
            let t = Tensor::vector(&values).unwrap();
            let bytes = encode_weights([(name.as_str(), &t)]).unwrap();
            let back = decode_weights(&bytes).unwrap();
            prop_assert_eq!(&back[0].0, &name);
            prop_assert_eq!(&back[0].1, &t);
            prop_assert_eq!(encode_weights(back.iter().map(|(n, t)| (n.as_str(), t))).unwrap(), bytes);
        }
    }
}
