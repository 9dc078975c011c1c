//! Feature cache file: `"ADFV"`, version u32, vector_dim u32, count u64,
//! then `count × vector_dim` little-endian f32 values, row-major.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ADFV";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

pub fn encode_feature_cache(rows: &Array2<f64>) -> Vec<u8> {
    let (count, dim) = rows.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + count * dim * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for &v in rows.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_feature_cache(bytes: &[u8]) -> Result<Array2<f64>> {
    let bad = |m: &str| Error::MalformedFeatureCache(m.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::MalformedFeatureCache(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("size overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::MalformedFeatureCache(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Array2::from_shape_vec((count, dim), values).map_err(|e| bad(&e.to_string()))
}

pub fn write_feature_cache(path: impl AsRef<Path>, rows: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_feature_cache(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    decode_feature_cache(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_f32() {
        let rows = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 / 16.0);
        let bytes = encode_feature_cache(&rows);
        assert_eq!(bytes.len(), 20 + 60);
        assert_eq!(decode_feature_cache(&bytes).unwrap(), rows);
    }

    #[test]
    fn detects_corruption() {
        let bytes = encode_feature_cache(&Array2::zeros((2, 4)));
        assert!(decode_feature_cache(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(
            decode_feature_cache(&wrong),
            Err(Error::MalformedFeatureCache(_))
        ));
    }
}
