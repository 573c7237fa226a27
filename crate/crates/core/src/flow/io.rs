//! Binary flow-field files.
//!
//! Layout: magic `SLFL`, `u32` width, `u32` height, then `width·height`
//! `(u, v)` pairs as little-endian `f32`, row-major.

use std::fs;
use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

pub const FLOW_MAGIC: &[u8; 4] = b"SLFL";

pub fn encode_flow(field: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * field.u().len());
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(field.width() as u32).to_le_bytes());
    out.extend_from_slice(&(field.height() as u32).to_le_bytes());
    for (u, v) in field.u().iter().zip(field.v()) {
        out.extend_from_slice(&(*u as f32).to_le_bytes());
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 || &bytes[..4] != FLOW_MAGIC {
        return Err(Error::FlowFormat("missing SLFL header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    let expected = 12 + 8 * w * h;
    if bytes.len() != expected {
        return Err(Error::FlowFormat(format!(
            "{w}x{h} field needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let float = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as f64;
    let (u, v) = (0..w * h).map(|p| (float(12 + 8 * p), float(16 + 8 * p))).unzip();
    FlowField::new(w, h, u, v)
}

pub fn write_flow(path: &Path, field: &FlowField) -> Result<()> {
    fs::write(path, encode_flow(field)).map_err(|e| Error::io(path, e))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes).map_err(|e| Error::FlowFormat(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let f = FlowField::new(2, 1, vec![1.5, -2.0], vec![0.25, 3.0]).unwrap();
        let bytes = encode_flow(&f);
        assert_eq!(&bytes[..4], b"SLFL");
        assert_eq!(&bytes[4..12], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &0.25f32.to_le_bytes());
        assert_eq!(bytes.len(), 12 + 16);
    }

    #[test]
    fn rejects_corrupt_files() {
        assert!(decode_flow(b"XXXX\0\0\0\0\0\0\0\0").is_err());
        let mut bytes = encode_flow(&FlowField::zeros(3, 3));
        bytes.pop();
        assert!(decode_flow(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn f32_values_round_trip(vals in prop::collection::vec(-100.0f32..100.0, 12)) {
            let u = vals[..6].iter().map(|&x| x as f64).collect();
            let v = vals[6..].iter().map(|&x| x as f64).collect();
            let f = FlowField::new(3, 2, u, v).unwrap();
            prop_assert_eq!(decode_flow(&encode_flow(&f)).unwrap(), f);
        }
    }
}
