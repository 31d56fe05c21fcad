use super::layers::{LayerSpec, Shape};
use super::model::{Mode, Model};
use super::real::Real;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivation {
    pub layer: usize,
    pub name: String,
    pub shape: Shape,
    /// Channel-major for spatial layers.
    pub values: Vec<f64>,
}

/// Inference-mode outputs of every layer except dropout (an identity at
/// inference) for a single image.
pub fn dump_activations<T: Real>(model: &Model<T>, image: &[f32]) -> Result<Vec<LayerActivation>> {
    let input: Vec<T> = image.iter().map(|&v| T::lit(v as f64)).collect();
    let pass = model.forward(&input, 1, Mode::Inference)?;
    Ok(model
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| !matches!(l, LayerSpec::Dropout { .. }))
        .map(|(i, l)| LayerActivation {
            layer: i,
            name: l.name(),
            shape: model.shapes()[i],
            values: pass.layer_output(i).iter().map(|v| v.as_f64()).collect(),
        })
        .collect())
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Tiles channels into a near-square grid with one-pixel gutters; each
/// channel is min-max scaled on its own (a constant channel renders black).
/// Flat layers become a single row. Returns `(rows, cols, pixels)`.
pub fn activation_grid(act: &LayerActivation) -> (usize, usize, Vec<f64>) {
    match act.shape {
        Shape::Flat(n) => (1, n, min_max(&act.values)),
        Shape::Spatial { h, w, c } => {
            let gc = (c as f64).sqrt().ceil() as usize;
            let gr = c.div_ceil(gc);
            let (rows, cols) = (gr * (h + 1) - 1, gc * (w + 1) - 1);
            let mut px = vec![0.0; rows * cols];
            for ch in 0..c {
                let tile = min_max(&act.values[ch * h * w..(ch + 1) * h * w]);
                let (ty, tx) = (ch / gc * (h + 1), ch % gc * (w + 1));
                for y in 0..h {
                    px[(ty + y) * cols + tx..(ty + y) * cols + tx + w].copy_from_slice(&tile[y * w..(y + 1) * w]);
                }
            }
            (rows, cols, px)
        }
    }
}
