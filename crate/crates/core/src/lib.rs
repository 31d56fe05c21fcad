//! App-usage behavioral identification.
//!
//! Raw app event logs are turned into per-day images (3-minute time bins by
//! numerically encoded apps), augmented with Gaussian blur, downsampled to
//! 50x50 and classified by user with a small CNN or an Adaboost baseline.
//!
//! Modules, bottom-up:
//!
//! - [`applog`]: log parsing, app vocabulary and frequency tables.
//! - [`synthgen`]: seeded synthetic multi-user logs.
//! - [`imager`]: day-image rendering, blur, resize and export.
//! - [`nnet`]: the CNN engine (forward, backward, RMSprop, training).
//! - [`boost`]: multiclass Adaboost on decision stumps.
//! - [`harness`]: variants, cross-validation, metrics and reports.

pub mod applog;
pub mod boost;
pub mod error;
pub mod harness;
pub mod imager;
pub mod nnet;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
