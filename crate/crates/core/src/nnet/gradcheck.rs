//! Central finite-difference check of backpropagation.
//!
//! The numeric side only ever calls the forward pass; dropout masks are
//! pinned by reusing one training seed, so both sides see the same network.

use rand::Rng as _;

use super::model::{build_reduced_model, one_hot, Mode, Model};
use super::ops::cross_entropy;
use crate::{rng, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so parameters whose true
/// gradient is zero (dead units) compare by absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params_checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(layer, flat index within weights++bias)` of the worst parameter.
    pub worst: (usize, usize),
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn loss(model: &Model<f64>, input: &[f64], batch: usize, targets: &[f64], seed: u64) -> Result<f64> {
    let pass = model.forward(input, batch, Mode::Training { seed })?;
    Ok(cross_entropy(pass.probabilities(), targets, model.n_classes()))
}

fn param_mut(m: &mut Model<f64>, layer: usize, idx: usize) -> &mut f64 {
    let p = m.params_mut()[layer].as_mut().expect("parametric layer");
    let n_weights = p.weights.len();
    if idx < n_weights { &mut p.weights[idx] } else { &mut p.bias[idx - n_weights] }
}

/// Compares every analytic gradient with central differences at `step`
/// and `step / 10`, keeping the closer of the two. A leaky-ReLU or
/// max-pool kink inside `orig +- step` spoils the wider difference but
/// rarely both.
pub fn finite_difference_check(
    model: &Model<f64>,
    input: &[f64],
    batch: usize,
    targets: &[f64],
    dropout_seed: u64,
    step: f64,
) -> Result<GradCheckReport> {
    let pass = model.forward(input, batch, Mode::Training { seed: dropout_seed })?;
    let analytic = model.backward(&pass, targets)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport { params_checked: 0, max_rel_error: 0.0, max_abs_error: 0.0, worst: (0, 0) };
    for layer in 0..model.params().len() {
        let Some(grad) = analytic[layer].as_ref() else { continue };
        for (idx, &a) in grad.weights.iter().chain(&grad.bias).enumerate() {
            let orig = *param_mut(&mut probe, layer, idx);
            let mut best = (f64::INFINITY, f64::INFINITY);
            for h in [step, step / 10.0] {
                *param_mut(&mut probe, layer, idx) = orig + h;
                let plus = loss(&probe, input, batch, targets, dropout_seed)?;
                *param_mut(&mut probe, layer, idx) = orig - h;
                let minus = loss(&probe, input, batch, targets, dropout_seed)?;
                let numeric = (plus - minus) / (2.0 * h);
                let rel = relative_error(a, numeric);
                if rel < best.0 {
                    best = (rel, (a - numeric).abs());
                }
            }
            *param_mut(&mut probe, layer, idx) = orig;
            report.params_checked += 1;
            report.max_abs_error = report.max_abs_error.max(best.1);
            if best.0 > report.max_rel_error {
                report.max_rel_error = best.0;
                report.worst = (layer, idx);
            }
        }
    }
    Ok(report)
}

/// Checks every parameter of the reduced network (8x8 input, 3 classes)
/// on a random batch of 4 images, with dropout active.
pub fn reduced_net_check(seed: u64) -> Result<GradCheckReport> {
    let n_classes = 3;
    let batch = 4;
    let model = build_reduced_model::<f64>(n_classes, seed)?;
    let mut r = rng::stream(seed, 1);
    let input: Vec<f64> = (0..batch * 64).map(|_| r.random::<f64>()).collect();
    let labels: Vec<usize> = (0..batch).map(|i| i % n_classes).collect();
    let targets = one_hot::<f64>(&labels, n_classes);
    finite_difference_check(&model, &input, batch, &targets, rng::mix(seed, 99), DEFAULT_STEP)
}
