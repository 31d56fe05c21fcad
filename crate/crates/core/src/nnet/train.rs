use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{one_hot, Mode, Model};
use super::ops::cross_entropy;
use super::optim::{RmsProp, RmsPropState};
use super::real::Real;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fast32,
    Check64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast32" => Ok(Precision::Fast32),
            "check64" => Ok(Precision::Check64),
            _ => Err(Error::Param(format!("unknown precision `{s}` (fast32, check64)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: RmsProp,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 64, epochs: 20, optimizer: RmsProp::default(), seed: 0, validation_fraction: 0.20 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,train_acc,val_loss,val_acc")?;
        for e in &self.epochs {
            writeln!(w, "{},{:.6},{:.6},{:.6},{:.6}", e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc)?;
        }
        Ok(())
    }
}

fn gather<T: Real>(images: &[f32], sample_len: usize, idx: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(idx.len() * sample_len);
    for &i in idx {
        out.extend(images[i * sample_len..(i + 1) * sample_len].iter().map(|&v| T::lit(v as f64)));
    }
    out
}

fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Number of validation samples carved from `n` training samples.
pub fn validation_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

/// Trains for a fixed number of epochs. A `validation_fraction` share of
/// the samples is set aside once, before the first epoch, and only
/// evaluated; training order is reshuffled every epoch.
///
/// `images` holds `labels.len()` samples of the model's input size.
pub fn train<T: Real>(model: &mut Model<T>, images: &[f32], labels: &[usize], config: &TrainConfig) -> Result<TrainHistory> {
    config.validate()?;
    let sample_len = model.input_shape().len();
    let n_classes = model.n_classes();
    if images.len() != labels.len() * sample_len {
        return Err(Error::shape("input", format!("{} labels but {} pixels", labels.len(), images.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Config(format!("label {bad} outside 0..{n_classes}")));
    }

    let mut rng = rng::stream(config.seed, 0);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let n_val = validation_count(labels.len(), config.validation_fraction);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut present = vec![false; n_classes];
    train_idx.iter().for_each(|&i| present[labels[i]] = true);
    if let Some(missing) = present.iter().position(|&p| !p) {
        return Err(Error::Config(format!("class {missing} has no training samples")));
    }

    let mut state = RmsPropState::zeros(model.params());
    let mut history = TrainHistory::default();
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in train_idx.chunks(config.batch_size).enumerate() {
            let x = gather::<T>(images, sample_len, batch);
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let y = one_hot::<T>(&batch_labels, n_classes);
            let dropout_seed = rng::mix(config.seed, ((epoch as u64) << 32) | b as u64);
            let pass = model.forward(&x, batch.len(), Mode::Training { seed: dropout_seed })?;
            let probs = pass.probabilities();
            loss_sum += cross_entropy(probs, &y, n_classes) * batch.len() as f64;
            correct += probs
                .chunks(n_classes)
                .zip(&batch_labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            let grads = model.backward(&pass, &y)?;
            config.optimizer.step(model.params_mut(), &grads, &mut state);
        }
        let (val_loss, val_acc) = if val_idx.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate(model, images, labels, val_idx, config.batch_size)?
        };
        model.epoch += 1;
        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / train_idx.len() as f64,
            train_acc: correct as f64 / train_idx.len() as f64,
            val_loss,
            val_acc,
        });
    }
    Ok(history)
}

/// Mean loss and accuracy over `idx` in inference mode.
pub fn evaluate<T: Real>(model: &Model<T>, images: &[f32], labels: &[usize], idx: &[usize], batch_size: usize) -> Result<(f64, f64)> {
    let sample_len = model.input_shape().len();
    let k = model.n_classes();
    let (mut loss, mut correct) = (0.0, 0usize);
    for batch in idx.chunks(batch_size.max(1)) {
        let probs = model.infer(&gather::<T>(images, sample_len, batch), batch.len())?;
        let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        loss += cross_entropy(&probs, &one_hot::<T>(&batch_labels, k), k) * batch.len() as f64;
        correct += probs.chunks(k).zip(&batch_labels).filter(|(r, &l)| argmax(r) == l).count();
    }
    Ok((loss / idx.len() as f64, correct as f64 / idx.len() as f64))
}

/// Class probabilities for `images`, `n x n_classes`, row order kept.
pub fn predict_proba<T: Real>(model: &Model<T>, images: &[f32], batch_size: usize) -> Result<Vec<T>> {
    let sample_len = model.input_shape().len();
    if images.len() % sample_len != 0 {
        return Err(Error::shape("input", "pixel count is not a multiple of the input size"));
    }
    let n = images.len() / sample_len;
    let mut out = Vec::with_capacity(n * model.n_classes());
    for start in (0..n).step_by(batch_size.max(1)) {
        let end = (start + batch_size.max(1)).min(n);
        let idx: Vec<usize> = (start..end).collect();
        out.extend(model.infer(&gather::<T>(images, sample_len, &idx), idx.len())?);
    }
    Ok(out)
}

/// Most probable class per image; ties go to the lowest class index.
pub fn predict<T: Real>(model: &Model<T>, images: &[f32], batch_size: usize) -> Result<Vec<usize>> {
    let k = model.n_classes();
    Ok(predict_proba(model, images, batch_size)?.chunks(k).map(argmax).collect())
}
