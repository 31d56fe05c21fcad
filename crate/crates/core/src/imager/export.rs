//! Image export.
//!
//! PGM: binary `P5`, maxval 255, byte = `floor(p * 255 + 0.5)`.
//!
//! Tensor cache, all integers little-endian:
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `b"APTS"`             |
//! | 4      | 4    | image count (u32)           |
//! | 8      | 4    | rows (u32)                  |
//! | 12     | 4    | cols (u32)                  |
//! | 16     | 4·n  | f32 pixels, image-major, row-major |

use std::io::{Read, Write};

use crate::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"APTS";

fn to_byte(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn pgm_bytes(rows: usize, cols: usize, pixels: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&p| to_byte(p)));
    out
}

pub fn write_pgm<W: Write>(mut w: W, rows: usize, cols: usize, pixels: &[f64]) -> Result<()> {
    w.write_all(&pgm_bytes(rows, cols, pixels))?;
    Ok(())
}

/// Reads a binary PGM with maxval <= 255. Returns `(rows, cols, bytes)`.
pub fn read_pgm<R: Read>(mut r: R) -> Result<(usize, usize, Vec<u8>)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < buf.len() && buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("not a binary PGM".into()));
    }
    let num = |s: String| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM number `{s}`")));
    let cols = num(token()?)?;
    let rows = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format("unsupported PGM maxval".into()));
    }
    let data = buf.get(pos + 1..).unwrap_or(&[]);
    if data.len() != rows * cols {
        return Err(Error::Format("PGM payload size mismatch".into()));
    }
    Ok((rows, cols, data.to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.data[i * n..(i + 1) * n]
    }
}

pub fn write_tensor<W: Write>(mut w: W, tensor: &Tensor) -> Result<()> {
    if tensor.data.len() != tensor.count * tensor.rows * tensor.cols {
        return Err(Error::Param("tensor payload does not match its header".into()));
    }
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::Param("tensor dimension exceeds u32".into()));
    w.write_all(&TENSOR_MAGIC)?;
    for v in [tensor.count, tensor.rows, tensor.cols] {
        w.write_all(&dim(v)?.to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(tensor.data.len() * 4);
    for x in &tensor.data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if header[..4] != TENSOR_MAGIC {
        return Err(Error::Format("bad tensor magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (count, rows, cols) = (word(4), word(8), word(12));
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * rows * cols * 4 {
        return Err(Error::Format(format!(
            "tensor payload is {} bytes, header promises {}",
            bytes.len(),
            count * rows * cols * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Tensor { count, rows, cols, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_scaling_and_rounding() {
        assert_eq!(*pgm_bytes(1, 1, &[1.0]).last().unwrap(), 255);
        assert_eq!(*pgm_bytes(1, 1, &[0.5]).last().unwrap(), 128);
        assert_eq!(*pgm_bytes(1, 1, &[0.0]).last().unwrap(), 0);
        assert_eq!(pgm_bytes(2, 3, &[0.0; 6]), b"P5\n3 2\n255\n\0\0\0\0\0\0".to_vec());
    }

    #[test]
    fn pgm_reads_back() {
        let bytes = pgm_bytes(2, 2, &[0.0, 0.25, 0.5, 1.0]);
        let (r, c, px) = read_pgm(bytes.as_slice()).unwrap();
        assert_eq!((r, c), (2, 2));
        assert_eq!(px, vec![0, 64, 128, 255]);
    }

    #[test]
    fn tensor_header_layout() {
        let t = Tensor { count: 1, rows: 1, cols: 2, data: vec![1.0, -0.5] };
        let mut out = Vec::new();
        write_tensor(&mut out, &t).unwrap();
        assert_eq!(&out[..4], b"APTS");
        assert_eq!(&out[4..16], &[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&out[16..20], &1.0f32.to_le_bytes());
        assert_eq!(read_tensor(out.as_slice()).unwrap(), t);
    }

    #[test]
    fn truncated_tensor_is_rejected() {
        let t = Tensor { count: 2, rows: 1, cols: 1, data: vec![0.0, 1.0] };
        let mut out = Vec::new();
        write_tensor(&mut out, &t).unwrap();
        out.pop();
        assert!(matches!(read_tensor(out.as_slice()), Err(Error::Format(_))));
    }
}
