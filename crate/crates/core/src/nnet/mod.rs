//! A small convolutional network engine: 3x3 same-padded convolutions,
//! (leaky) ReLU, 2x2 max pooling, inverted dropout, dense layers and a
//! softmax output trained with categorical cross-entropy and RMSprop.
//!
//! Generic over [`Real`] so the same code runs in `f32` for training and
//! `f64` for finite-difference checks. Work inside a batch is split into
//! fixed-size blocks, so results never depend on the number of threads.

mod activations;
mod checkpoint;
pub mod gradcheck;
mod layers;
mod model;
mod ops;
mod optim;
mod real;
mod train;

pub use activations::{activation_grid, dump_activations, LayerActivation};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use layers::{paper_layers, reduced_layers, LayerSpec, Shape};
pub use model::{
    build_model, build_reduced_model, one_hot, ForwardPass, Mode, Model, ParamSet, Params, PAPER_INPUT, REDUCED_INPUT,
};
pub use ops::cross_entropy;
pub use optim::{RmsProp, RmsPropState};
pub use real::Real;
pub use train::{
    evaluate, predict, predict_proba, train, validation_count, EpochStats, Precision, TrainConfig, TrainHistory,
};
