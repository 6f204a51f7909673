//! Model checkpoint files.
//!
//! Layout: magic `ILAF`, format version (u32 LE), arch id, seed, input
//! shape, class count, layer table, then raw f32 little-endian parameter
//! data, with a trailing CRC32 over everything before it.

use super::{LayerSpec, Model};
use crate::error::{Error, Result};
use crate::fileio::{write_atomic, Reader, Writer};
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"ILAF";
const VERSION: u32 = 1;

fn layer_code(l: &LayerSpec) -> (u8, Vec<u32>, u8) {
    match l {
        LayerSpec::Dense { in_dim, out_dim } => (0, vec![*in_dim as u32, *out_dim as u32], 0),
        LayerSpec::Conv2d { in_c, out_c, kh, kw, stride, same } => (
            1,
            vec![*in_c as u32, *out_c as u32, *kh as u32, *kw as u32, *stride as u32, *same as u32],
            0,
        ),
        LayerSpec::Relu { linbp } => (2, vec![], *linbp as u8),
        LayerSpec::MaxPool2d { k, stride } => (3, vec![*k as u32, *stride as u32], 0),
        LayerSpec::Flatten => (4, vec![], 0),
    }
}

fn layer_decode(kind: u8, dims: &[u32], linbp: u8, what: &'static str) -> Result<LayerSpec> {
    let bad = || Error::Format { what, detail: format!("bad layer entry kind={kind} dims={dims:?}") };
    Ok(match kind {
        0 if dims.len() == 2 => LayerSpec::Dense { in_dim: dims[0] as usize, out_dim: dims[1] as usize },
        1 if dims.len() == 6 => LayerSpec::Conv2d {
            in_c: dims[0] as usize,
            out_c: dims[1] as usize,
            kh: dims[2] as usize,
            kw: dims[3] as usize,
            stride: dims[4] as usize,
            same: dims[5] != 0,
        },
        2 if dims.is_empty() => LayerSpec::Relu { linbp: linbp != 0 },
        3 if dims.len() == 2 => LayerSpec::MaxPool2d { k: dims[0] as usize, stride: dims[1] as usize },
        4 if dims.is_empty() => LayerSpec::Flatten,
        _ => return Err(bad()),
    })
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.str(model.arch_id());
    w.u64(model.seed());
    w.u32(model.input_shape().len() as u32);
    for &d in model.input_shape() {
        w.u32(d as u32);
    }
    w.u32(model.classes() as u32);
    match model.metadata() {
        Some(st) => {
            w.u8(1);
            w.u32(st.epochs as u32);
            w.f32(st.lr);
            w.f32(st.train_accuracy);
            w.f32(st.test_accuracy);
        }
        None => w.u8(0),
    }
    w.u32(model.layers().len() as u32);
    for l in model.layers() {
        let (kind, dims, linbp) = layer_code(l);
        w.u8(kind);
        w.u32(dims.len() as u32);
        for d in dims {
            w.u32(d);
        }
        w.u8(linbp);
    }
    w.u32(model.params().len() as u32);
    for (name, t) in model.params() {
        w.str(name);
        w.u32(t.shape().len() as u32);
        for &d in t.shape() {
            w.u32(d as u32);
        }
        w.f32s(t.data());
    }
    w.finish()
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let what = "checkpoint";
    let mut r = Reader::new(bytes, what, MAGIC, VERSION)?;
    let arch_id = r.str()?;
    let seed = r.u64()?;
    let rank = r.u32()? as usize;
    let mut input_shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        input_shape.push(r.u32()? as usize);
    }
    let classes = r.u32()? as usize;
    let stats = if r.u8()? != 0 {
        Some(crate::nn::TrainStats {
            epochs: r.u32()? as usize,
            lr: r.f32()?,
            train_accuracy: r.f32()?,
            test_accuracy: r.f32()?,
        })
    } else {
        None
    };
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let kind = r.u8()?;
        let nd = r.u32()? as usize;
        let mut dims = Vec::with_capacity(nd);
        for _ in 0..nd {
            dims.push(r.u32()?);
        }
        let linbp = r.u8()?;
        layers.push(layer_decode(kind, &dims, linbp, what)?);
    }
    let n_params = r.u32()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name = r.str()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = r.f32s(numel)?;
        params.push((name, Tensor::new(shape, data)?));
    }
    r.done()?;
    let mut model = Model::from_parts(arch_id, seed, layers, params, input_shape, classes);
    if let Some(st) = stats {
        model.set_metadata(st);
    }
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::zoo;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = zoo::build("cnn-small", 3).unwrap();
        m.set_metadata(crate::nn::TrainStats {
            epochs: 4,
            lr: 0.05,
            train_accuracy: 0.97,
            test_accuracy: 0.93,
        });
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.arch_id(), m.arch_id());
        assert_eq!(back.seed(), m.seed());
        assert_eq!(back.layers(), m.layers());
        assert_eq!(back.params_checksum(), m.params_checksum());
        assert_eq!(back.input_shape(), m.input_shape());
        assert_eq!(back.metadata(), m.metadata());
    }

    #[test]
    fn corruption_is_detected() {
        let m = zoo::build("mlp-2", 1).unwrap();
        let mut bytes = to_bytes(&m);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(matches!(from_bytes(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let m = zoo::build("mlp-2", 1).unwrap();
        let mut bytes = to_bytes(&m);
        bytes[0] = b'X';
        // fix the crc so only the magic is wrong
        let crc = crc32fast::hash(&bytes[..bytes.len() - 4]);
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(from_bytes(&bytes), Err(Error::Format { .. })));
    }
}
