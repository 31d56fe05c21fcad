use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Activation shape of one sample. Spatial data is stored channel-major
/// (`c x h x w`); displayed as `(h, w, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Spatial { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { h, w, c } => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Spatial { h, w, c } => write!(f, "({h}, {w}, {c})"),
            Shape::Flat(n) => write!(f, "({n})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// 3x3 kernels, stride 1, zero "same" padding.
    Conv { out_channels: usize },
    LeakyRelu { alpha: f64 },
    /// 2x2 window, stride 2, odd trailing row/column dropped.
    MaxPool,
    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`.
    Dropout { rate: f64 },
    Flatten,
    Dense { width: usize },
    Relu,
    Softmax,
}

impl LayerSpec {
    pub fn name(&self) -> String {
        match *self {
            LayerSpec::Conv { out_channels } => format!("conv{out_channels}"),
            LayerSpec::LeakyRelu { .. } => "leaky_relu".into(),
            LayerSpec::MaxPool => "max_pool".into(),
            LayerSpec::Dropout { rate } => format!("dropout{rate:.2}"),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Dense { width } => format!("dense{width}"),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::Softmax => "softmax".into(),
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }

    /// Output shape for `input`, validating the layer's parameters.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let bad = |msg: String| Err(Error::shape(self.name(), msg));
        match (*self, input) {
            (LayerSpec::Conv { out_channels }, Shape::Spatial { h, w, .. }) => {
                if out_channels == 0 {
                    return bad("zero output channels".into());
                }
                Ok(Shape::Spatial { h, w, c: out_channels })
            }
            (LayerSpec::LeakyRelu { alpha }, s) => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return bad(format!("alpha {alpha} outside (0, 1)"));
                }
                Ok(s)
            }
            (LayerSpec::MaxPool, Shape::Spatial { h, w, c }) => {
                if h < 2 || w < 2 {
                    return bad(format!("cannot pool {input}"));
                }
                Ok(Shape::Spatial { h: h / 2, w: w / 2, c })
            }
            (LayerSpec::Dropout { rate }, s) => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("rate {rate} outside [0, 1)"));
                }
                Ok(s)
            }
            (LayerSpec::Flatten, s) => Ok(Shape::Flat(s.len())),
            (LayerSpec::Dense { width }, Shape::Flat(_)) => {
                if width == 0 {
                    return bad("zero width".into());
                }
                Ok(Shape::Flat(width))
            }
            (LayerSpec::Relu, s) => Ok(s),
            (LayerSpec::Softmax, Shape::Flat(n)) => Ok(Shape::Flat(n)),
            (_, s) => bad(format!("incompatible input shape {s}")),
        }
    }

    /// `(weights, bias)` element counts for `input`.
    pub fn param_sizes(&self, input: Shape) -> (usize, usize) {
        match (*self, input) {
            (LayerSpec::Conv { out_channels }, Shape::Spatial { c, .. }) => (out_channels * c * 9, out_channels),
            (LayerSpec::Dense { width }, Shape::Flat(n)) => (n * width, width),
            _ => (0, 0),
        }
    }

    /// Glorot fan-in and fan-out.
    pub(crate) fn fans(&self, input: Shape) -> (usize, usize) {
        match (*self, input) {
            (LayerSpec::Conv { out_channels }, Shape::Spatial { c, .. }) => (c * 9, out_channels * 9),
            (LayerSpec::Dense { width }, Shape::Flat(n)) => (n, width),
            _ => (0, 0),
        }
    }
}

/// The classifier of the study: three conv blocks and a 512-wide head.
pub fn paper_layers(n_classes: usize) -> Vec<LayerSpec> {
    use LayerSpec::*;
    let lrelu = LeakyRelu { alpha: 0.1 };
    vec![
        Conv { out_channels: 32 }, lrelu, MaxPool, Dropout { rate: 0.20 },
        Conv { out_channels: 32 }, lrelu, MaxPool, Dropout { rate: 0.30 },
        Conv { out_channels: 64 }, lrelu, MaxPool, Dropout { rate: 0.30 },
        Flatten,
        Dense { width: 512 }, Relu, Dropout { rate: 0.50 },
        Dense { width: n_classes }, Softmax,
    ]
}

/// Same topology at toy size (8x8 input, 4/4/8 channels, 16-wide head),
/// used for finite-difference checks.
pub fn reduced_layers(n_classes: usize) -> Vec<LayerSpec> {
    use LayerSpec::*;
    let lrelu = LeakyRelu { alpha: 0.1 };
    vec![
        Conv { out_channels: 4 }, lrelu, MaxPool, Dropout { rate: 0.20 },
        Conv { out_channels: 4 }, lrelu, MaxPool, Dropout { rate: 0.30 },
        Conv { out_channels: 8 }, lrelu, MaxPool, Dropout { rate: 0.30 },
        Flatten,
        Dense { width: 16 }, Relu, Dropout { rate: 0.50 },
        Dense { width: n_classes }, Softmax,
    ]
}
