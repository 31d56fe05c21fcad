//! Binary model checkpoints. Integers and floats are little-endian.
//!
//! ```text
//! magic      4   b"APCK"
//! version    u32 1
//! precision  u8  4 (f32) or 8 (f64)
//! seed       u64
//! epoch      u32
//! input      u8 tag (0 spatial, 1 flat), u32 x3 (h, w, c | n, 0, 0)
//! n_layers   u32
//! layer      u8 kind, u32 size, f64 rate   (repeated n_layers times)
//! tensors    u64 len, len values           (weights then bias of each
//!                                           conv/dense layer, in order)
//! ```

use std::io::{Read, Write};

use super::layers::{LayerSpec, Shape};
use super::model::{Model, ParamSet, Params};
use super::real::Real;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"APCK";
const VERSION: u32 = 1;

fn encode_layer(layer: &LayerSpec) -> (u8, u32, f64) {
    match *layer {
        LayerSpec::Conv { out_channels } => (0, out_channels as u32, 0.0),
        LayerSpec::LeakyRelu { alpha } => (1, 0, alpha),
        LayerSpec::MaxPool => (2, 0, 0.0),
        LayerSpec::Dropout { rate } => (3, 0, rate),
        LayerSpec::Flatten => (4, 0, 0.0),
        LayerSpec::Dense { width } => (5, width as u32, 0.0),
        LayerSpec::Relu => (6, 0, 0.0),
        LayerSpec::Softmax => (7, 0, 0.0),
    }
}

fn decode_layer(kind: u8, size: u32, rate: f64) -> Result<LayerSpec> {
    Ok(match kind {
        0 => LayerSpec::Conv { out_channels: size as usize },
        1 => LayerSpec::LeakyRelu { alpha: rate },
        2 => LayerSpec::MaxPool,
        3 => LayerSpec::Dropout { rate },
        4 => LayerSpec::Flatten,
        5 => LayerSpec::Dense { width: size as usize },
        6 => LayerSpec::Relu,
        7 => LayerSpec::Softmax,
        _ => return Err(Error::Format(format!("unknown layer kind {kind}"))),
    })
}

pub fn save_checkpoint<T: Real, W: Write>(model: &Model<T>, mut w: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(T::BYTES as u8);
    buf.extend_from_slice(&model.seed.to_le_bytes());
    buf.extend_from_slice(&model.epoch.to_le_bytes());
    let (tag, dims) = match model.input_shape() {
        Shape::Spatial { h, w, c } => (0u8, [h, w, c]),
        Shape::Flat(n) => (1u8, [n, 0, 0]),
    };
    buf.push(tag);
    for d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        let (kind, size, rate) = encode_layer(layer);
        buf.push(kind);
        buf.extend_from_slice(&size.to_le_bytes());
        buf.extend_from_slice(&rate.to_le_bytes());
    }
    for p in model.params().iter().flatten() {
        for t in [&p.weights, &p.bias] {
            buf.extend_from_slice(&(t.len() as u64).to_le_bytes());
            t.iter().for_each(|v| v.write_le(&mut buf));
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint<T: Real, R: Read>(mut r: R) -> Result<Model<T>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let precision = c.u8()? as usize;
    if precision != T::BYTES {
        return Err(Error::Format(format!("checkpoint stores {}-byte floats, expected {}", precision, T::BYTES)));
    }
    let seed = c.u64()?;
    let epoch = c.u32()?;
    let tag = c.u8()?;
    let dims = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
    let input = match tag {
        0 => Shape::Spatial { h: dims[0], w: dims[1], c: dims[2] },
        1 => Shape::Flat(dims[0]),
        _ => return Err(Error::Format("bad input shape tag".into())),
    };
    let n_layers = c.u32()? as usize;
    let layers = (0..n_layers)
        .map(|_| {
            let kind = c.u8()?;
            let size = c.u32()?;
            let rate = c.f64()?;
            decode_layer(kind, size, rate)
        })
        .collect::<Result<Vec<_>>>()?;
    let read_tensor = |c: &mut Cursor| -> Result<Vec<T>> {
        let len = c.u64()? as usize;
        let bytes = c.take(len.checked_mul(T::BYTES).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        Ok(bytes.chunks_exact(T::BYTES).map(T::read_le).collect())
    };
    let params: ParamSet<T> = layers
        .iter()
        .map(|l| {
            if l.is_parametric() {
                let weights = read_tensor(&mut c)?;
                let bias = read_tensor(&mut c)?;
                Ok(Some(Params { weights, bias }))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Model::from_parts(input, layers, params, seed, epoch)
}
