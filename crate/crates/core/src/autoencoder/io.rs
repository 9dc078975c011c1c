//! Model file: `"ADAE"`, version u32, layer_count u32, then per layer
//! `{in_dim u32, out_dim u32, activation u8}`, then the weights of every
//! layer followed by the biases of every layer, all as little-endian f32,
//! row-major, in layer order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, AutoEncoderModel, DenseLayer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ADAE";
pub const VERSION: u32 = 1;

pub fn encode_model(model: &AutoEncoderModel) -> Vec<u8> {
    let layers = model.layers();
    let mut out = Vec::with_capacity(12 + layers.len() * 9 + model.parameter_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        out.push(layer.activation.code());
    }
    for layer in layers {
        for &w in layer.weights.iter() {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
    }
    for layer in layers {
        for &b in layer.bias.iter() {
            out.extend_from_slice(&(b as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::MalformedModelFile("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::MalformedModelFile("size overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<AutoEncoderModel> {
    let bad = |m: String| Error::MalformedModelFile(m);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(bad("no layers".into()));
    }
    let mut shapes = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let code = r.take(1)?[0];
        let act = Activation::from_code(code).ok_or_else(|| bad(format!("unknown activation code {code}")))?;
        if in_dim == 0 || out_dim == 0 {
            return Err(bad("zero layer width".into()));
        }
        shapes.push((in_dim, out_dim, act));
    }
    let mut weights = Vec::with_capacity(count);
    for &(in_dim, out_dim, _) in &shapes {
        let values = r.f32s(in_dim * out_dim)?;
        weights.push(Array2::from_shape_vec((out_dim, in_dim), values).expect("sized"));
    }
    let mut layers = Vec::with_capacity(count);
    for (w, &(_, out_dim, act)) in weights.into_iter().zip(&shapes) {
        let bias = Array1::from(r.f32s(out_dim)?);
        layers.push(DenseLayer::new(w, bias, act).map_err(|e| bad(e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    AutoEncoderModel::from_layers(layers).map_err(|e| bad(e.to_string()))
}

pub fn save_model(model: &AutoEncoderModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AutoEncoderModel> {
    let path = path.as_ref();
    decode_model(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::init_model;

    #[test]
    fn round_trip_is_exact() {
        let model = init_model(17);
        let bytes = encode_model(&model);
        assert_eq!(bytes.len(), 12 + 10 * 9 + model.parameter_count() * 4);
        assert_eq!(decode_model(&bytes).unwrap(), model);
    }

    #[test]
    fn f64_parameters_round_to_f32() {
        let mut model = init_model(1);
        model.layers_mut()[0].weights[[0, 0]] = 0.1;
        let back = decode_model(&encode_model(&model)).unwrap();
        model.round_to_f32();
        assert_eq!(back, model);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_model(&init_model(2));
        for cut in [0, 3, 11, 50, bytes.len() - 1] {
            assert!(matches!(decode_model(&bytes[..cut]), Err(Error::MalformedModelFile(_))));
        }
        let mut wrong = bytes.clone();
        wrong[..4].copy_from_slice(b"ADFV");
        assert!(matches!(decode_model(&wrong), Err(Error::MalformedModelFile(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_model(&extra).is_err());
        let mut act = bytes;
        act[20] = 9;
        assert!(decode_model(&act).is_err());
    }
}
