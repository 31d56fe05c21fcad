use rand::Rng as _;

use super::layers::{paper_layers, reduced_layers, LayerSpec, Shape};
use super::ops::{self, Dims};
use super::real::Real;
use crate::{rng, Error, Result};

pub const PAPER_INPUT: Shape = Shape::Spatial { h: 50, w: 50, c: 1 };
pub const REDUCED_INPUT: Shape = Shape::Spatial { h: 8, w: 8, c: 1 };

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Params<T> {
    pub fn zeros_like(&self) -> Self {
        Params { weights: vec![T::zero(); self.weights.len()], bias: vec![T::zero(); self.bias.len()] }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-layer parameters (or gradients); `None` for layers without any.
pub type ParamSet<T> = Vec<Option<Params<T>>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Inference,
    /// Dropout active; layer `i` draws its mask from stream `i` of `seed`.
    Training { seed: u64 },
}

#[derive(Debug)]
enum Cache<T> {
    None,
    Argmax(Vec<u32>),
    Mask(Vec<T>),
}

/// Result of a forward pass. Holds every layer's output; training passes
/// also keep what backpropagation needs.
#[derive(Debug)]
pub struct ForwardPass<T> {
    pub batch: usize,
    input: Vec<T>,
    outputs: Vec<Vec<T>>,
    caches: Option<Vec<Cache<T>>>,
}

impl<T: Real> ForwardPass<T> {
    /// Class probabilities, `batch x n_classes`.
    pub fn probabilities(&self) -> &[T] {
        self.outputs.last().expect("model has layers")
    }

    pub fn layer_output(&self, layer: usize) -> &[T] {
        &self.outputs[layer]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    input: Shape,
    layers: Vec<LayerSpec>,
    shapes: Vec<Shape>,
    params: ParamSet<T>,
    pub seed: u64,
    /// Epochs trained so far.
    pub epoch: u32,
}

/// The study's classifier for 50x50 single-channel input.
pub fn build_model<T: Real>(n_classes: usize, seed: u64) -> Result<Model<T>> {
    if n_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    Model::new(PAPER_INPUT, paper_layers(n_classes), seed)
}

pub fn build_reduced_model<T: Real>(n_classes: usize, seed: u64) -> Result<Model<T>> {
    if n_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    Model::new(REDUCED_INPUT, reduced_layers(n_classes), seed)
}

impl<T: Real> Model<T> {
    /// Infers shapes and draws Glorot-uniform weights (zero biases) from
    /// stream 0 of `seed`, in layer order.
    pub fn new(input: Shape, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if layers.last() != Some(&LayerSpec::Softmax) {
            return Err(Error::Config("the last layer must be softmax".into()));
        }
        if layers[..layers.len() - 1].contains(&LayerSpec::Softmax) {
            return Err(Error::Config("softmax is only supported as the last layer".into()));
        }
        let mut rng = rng::stream(seed, 0);
        let mut shapes = Vec::with_capacity(layers.len());
        let mut params = Vec::with_capacity(layers.len());
        let mut shape = input;
        for layer in &layers {
            let (nw, nb) = layer.param_sizes(shape);
            params.push(layer.is_parametric().then(|| {
                let (fan_in, fan_out) = layer.fans(shape);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..nw).map(|_| T::lit(rng.random_range(-limit..limit))).collect();
                Params { weights, bias: vec![T::zero(); nb] }
            }));
            shape = layer.output_shape(shape)?;
            shapes.push(shape);
        }
        Ok(Model { input, layers, shapes, params, seed, epoch: 0 })
    }

    pub(crate) fn from_parts(input: Shape, layers: Vec<LayerSpec>, params: ParamSet<T>, seed: u64, epoch: u32) -> Result<Self> {
        let mut model = Model::new(input, layers, seed)?;
        if params.len() != model.params.len() {
            return Err(Error::Format("parameter list does not match the layers".into()));
        }
        for (i, (have, want)) in params.iter().zip(&model.params).enumerate() {
            let ok = match (have, want) {
                (Some(h), Some(w)) => h.weights.len() == w.weights.len() && h.bias.len() == w.bias.len(),
                (None, None) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Format(format!("parameters of layer {i} have the wrong size")));
            }
        }
        model.params = params;
        model.epoch = epoch;
        Ok(model)
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output shape of each layer.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn n_classes(&self) -> usize {
        self.shapes.last().map(Shape::len).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Params::len).sum()
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Keras-style layer table with output shapes and parameter counts.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (layer, (shape, p)) in self.layers.iter().zip(self.shapes.iter().zip(&self.params)) {
            let n = p.as_ref().map(Params::len).unwrap_or(0);
            s.push_str(&format!("{:<14} {:<16} {}\n", layer.name(), shape.to_string(), n));
        }
        s.push_str(&format!("Trainable params: {}\n", self.param_count()));
        s
    }

    fn input_of(&self, layer: usize) -> Shape {
        if layer == 0 { self.input } else { self.shapes[layer - 1] }
    }

    fn dims(shape: Shape, n: usize) -> Dims {
        match shape {
            Shape::Spatial { h, w, c } => Dims { n, c, h, w },
            Shape::Flat(len) => Dims { n, c: len, h: 1, w: 1 },
        }
    }

    /// Runs `batch` samples laid out contiguously in `input`.
    pub fn forward(&self, input: &[T], batch: usize, mode: Mode) -> Result<ForwardPass<T>> {
        self.run(input, batch, mode, true)
    }

    /// Class probabilities only; intermediate buffers are dropped as the
    /// pass proceeds.
    pub fn infer(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        let mut pass = self.run(input, batch, Mode::Inference, false)?;
        Ok(pass.outputs.pop().expect("model has layers"))
    }

    fn run(&self, input: &[T], batch: usize, mode: Mode, keep: bool) -> Result<ForwardPass<T>> {
        if batch == 0 || input.len() != batch * self.input.len() {
            return Err(Error::shape(
                self.layers.first().map(LayerSpec::name).unwrap_or_default(),
                format!("expected {batch} samples of {} values, got {} values", self.input, input.len()),
            ));
        }
        let training = matches!(mode, Mode::Training { .. });
        let keep_all = keep || training;
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut last: Option<Vec<T>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let d = Self::dims(self.input_of(i), batch);
            let x: &[T] = match (keep_all, i) {
                (_, 0) => input,
                (true, _) => &outputs[i - 1],
                (false, _) => last.as_deref().expect("previous layer ran"),
            };
            let (out, cache) = match *layer {
                LayerSpec::Conv { .. } => {
                    let p = self.params[i].as_ref().expect("conv has params");
                    (ops::conv_forward(x, d, &p.weights, &p.bias), Cache::None)
                }
                LayerSpec::LeakyRelu { alpha } => (ops::leaky_relu(x, T::lit(alpha)), Cache::None),
                LayerSpec::Relu => (ops::relu(x), Cache::None),
                LayerSpec::MaxPool => {
                    let (out, arg) = ops::max_pool(x, d);
                    (out, if training { Cache::Argmax(arg) } else { Cache::None })
                }
                LayerSpec::Dropout { rate } => match mode {
                    Mode::Training { seed } if rate > 0.0 => {
                        let mask = ops::dropout_mask::<T>(x.len(), rate, seed, i as u64);
                        let out = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                        (out, Cache::Mask(mask))
                    }
                    _ => (x.to_vec(), Cache::None),
                },
                LayerSpec::Flatten => (x.to_vec(), Cache::None),
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().expect("dense has params");
                    (ops::dense_forward(x, batch, &p.weights, &p.bias), Cache::None)
                }
                LayerSpec::Softmax => (ops::softmax(x, self.shapes[i].len()), Cache::None),
            };
            caches.push(cache);
            if keep_all {
                outputs.push(out);
            } else {
                last = Some(out);
            }
        }
        if !keep_all {
            outputs.extend(last);
        }
        let stored_input = if training { input.to_vec() } else { Vec::new() };
        Ok(ForwardPass {
            batch,
            input: stored_input,
            outputs,
            caches: training.then_some(caches),
        })
    }

    /// Gradient of the mean batch cross-entropy with respect to every
    /// parameter. `targets` is `batch x n_classes` (one-hot rows).
    pub fn backward(&self, pass: &ForwardPass<T>, targets: &[T]) -> Result<ParamSet<T>> {
        let caches = pass
            .caches
            .as_ref()
            .ok_or_else(|| Error::Usage("backward needs a training-mode forward pass".into()))?;
        let n = pass.batch;
        let k = self.n_classes();
        if targets.len() != n * k {
            return Err(Error::shape("softmax", format!("expected {n} x {k} targets, got {}", targets.len())));
        }
        let scale = T::one() / T::lit(n as f64);
        // softmax + cross-entropy: dL/dlogits = (p - y) / B
        let mut grad: Vec<T> = pass
            .probabilities()
            .iter()
            .zip(targets)
            .map(|(&p, &y)| (p - y) * scale)
            .collect();

        let mut grads: ParamSet<T> = vec![None; self.layers.len()];
        let last = self.layers.len() - 1;
        let first_param = self.layers.iter().position(LayerSpec::is_parametric).unwrap_or(0);
        for i in (0..last).rev() {
            let layer_in: &[T] = if i == 0 { &pass.input } else { &pass.outputs[i - 1] };
            let out = &pass.outputs[i];
            let d = Self::dims(self.input_of(i), n);
            let need_dx = i > first_param;
            grad = match (self.layers[i], &caches[i]) {
                (LayerSpec::Conv { out_channels }, _) => {
                    let p = self.params[i].as_ref().expect("conv has params");
                    let (dw, db, dx) = ops::conv_backward(&grad, layer_in, d, &p.weights, out_channels, need_dx);
                    grads[i] = Some(Params { weights: dw, bias: db });
                    dx.unwrap_or_default()
                }
                (LayerSpec::Dense { width }, _) => {
                    let p = self.params[i].as_ref().expect("dense has params");
                    let (dw, db, dx) = ops::dense_backward(&grad, layer_in, n, &p.weights, width, need_dx);
                    grads[i] = Some(Params { weights: dw, bias: db });
                    dx.unwrap_or_default()
                }
                (LayerSpec::LeakyRelu { alpha }, _) => ops::rectifier_backward(&grad, out, T::lit(alpha)),
                (LayerSpec::Relu, _) => ops::rectifier_backward(&grad, out, T::zero()),
                (LayerSpec::MaxPool, Cache::Argmax(arg)) => ops::max_pool_backward(&grad, arg, layer_in.len()),
                (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
                    grad.iter().zip(mask).map(|(&g, &m)| g * m).collect()
                }
                (LayerSpec::Dropout { .. }, Cache::None) | (LayerSpec::Flatten, _) => grad,
                (layer, _) => {
                    return Err(Error::Usage(format!("missing forward cache for layer `{}`", layer.name())));
                }
            };
            if !need_dx && i <= first_param {
                break;
            }
        }
        Ok(grads)
    }
}

/// One-hot rows for `labels`.
pub fn one_hot<T: Real>(labels: &[usize], n_classes: usize) -> Vec<T> {
    let mut out = vec![T::zero(); labels.len() * n_classes];
    for (row, &l) in out.chunks_mut(n_classes).zip(labels) {
        row[l] = T::one();
    }
    out
}
