use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::applog::{compute_frequencies, split_days, AppVocabulary, EventLog, FrequencyTable, Owner, Scope};
use crate::imager::{
    augment_with, bin_events, read_tensor, render_day, resize_pixels, write_tensor, DayImage, ImageGeometry, ImageMeta,
    Tensor, RESIZED_SIDE,
};
use crate::{Error, Result};

/// One pool image: which user-day it came from and its blur size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub user_id: String,
    pub label: usize,
    pub day: NaiveDate,
    pub filter_size: u8,
}

/// Resized square images of one encoding with their labels. Labels are the
/// ranks of the user ids in byte-wise order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePool {
    pub encoding: Scope,
    pub users: Vec<String>,
    pub side: usize,
    pub entries: Vec<PoolEntry>,
    /// `entries.len()` images of `side * side` values, row-major.
    pub pixels: Vec<f32>,
}

impl ImagePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.users.len()
    }

    pub fn image_len(&self) -> usize {
        self.side * self.side
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }

    /// Images at `idx`, in that order, as one contiguous buffer.
    pub fn gather(&self, idx: &[usize]) -> Vec<f32> {
        let mut out = Vec::with_capacity(idx.len() * self.image_len());
        for &i in idx {
            out.extend_from_slice(self.image(i));
        }
        out
    }

    /// A pool holding the images at `idx`, same user list.
    pub fn subset(&self, idx: &[usize]) -> ImagePool {
        ImagePool {
            encoding: self.encoding,
            users: self.users.clone(),
            side: self.side,
            entries: idx.iter().map(|&i| self.entries[i].clone()).collect(),
            pixels: self.gather(idx),
        }
    }

    /// Distinct `(label, day)` pairs in first-appearance order.
    pub fn base_days(&self) -> Vec<(usize, NaiveDate)> {
        let mut seen = std::collections::BTreeSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert((e.label, e.day)))
            .map(|e| (e.label, e.day))
            .collect()
    }

    /// Index of each image's base day within [`ImagePool::base_days`].
    pub fn day_groups(&self) -> Vec<usize> {
        let days = self.base_days();
        let lookup: std::collections::BTreeMap<_, _> = days.iter().enumerate().map(|(i, &d)| (d, i)).collect();
        self.entries.iter().map(|e| lookup[&(e.label, e.day)]).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let (tensor_path, index_path) = pool_paths(dir, self.encoding);
        let tensor = Tensor { count: self.len(), rows: self.side, cols: self.side, data: self.pixels.clone() };
        write_tensor(BufWriter::new(File::create(tensor_path)?), &tensor)?;
        let mut w = BufWriter::new(File::create(index_path)?);
        writeln!(w, "user_id,label,day,filter_size")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{}", e.user_id, e.label, e.day, e.filter_size)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path, encoding: Scope) -> Result<Self> {
        let (tensor_path, index_path) = pool_paths(dir, encoding);
        if !tensor_path.exists() || !index_path.exists() {
            return Err(Error::Config(format!(
                "no cached {encoding} image pool in {}; run `appprint render` and `appprint augment` first",
                dir.display()
            )));
        }
        let tensor = read_tensor(BufReader::new(File::open(&tensor_path)?))?;
        if tensor.rows != tensor.cols {
            return Err(Error::Format("pool images are not square".into()));
        }
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(File::open(&index_path)?).lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse { line: i + 1, msg: msg.into() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad("expected user_id,label,day,filter_size"));
            }
            entries.push(PoolEntry {
                user_id: f[0].to_string(),
                label: f[1].parse().map_err(|_| bad("bad label"))?,
                day: f[2].parse().map_err(|_| bad("bad day"))?,
                filter_size: f[3].parse().map_err(|_| bad("bad filter size"))?,
            });
        }
        if entries.len() != tensor.count {
            return Err(Error::Format(format!("index lists {} images, tensor holds {}", entries.len(), tensor.count)));
        }
        let users = users_of(&entries)?;
        Ok(ImagePool { encoding, users, side: tensor.rows, entries, pixels: tensor.data })
    }
}

fn users_of(entries: &[PoolEntry]) -> Result<Vec<String>> {
    let mut users: Vec<String> = entries.iter().map(|e| e.user_id.clone()).collect();
    users.sort();
    users.dedup();
    for e in entries {
        if users.get(e.label) != Some(&e.user_id) {
            return Err(Error::Format(format!("label {} does not match user `{}`", e.label, e.user_id)));
        }
    }
    Ok(users)
}

pub fn pool_paths(dir: &Path, encoding: Scope) -> (PathBuf, PathBuf) {
    (dir.join(format!("pool-{}.apts", encoding.name())), dir.join(format!("pool-{}.csv", encoding.name())))
}

pub fn base_paths(dir: &Path, encoding: Scope) -> (PathBuf, PathBuf) {
    (dir.join(format!("base-{}.apts", encoding.name())), dir.join(format!("base-{}.csv", encoding.name())))
}

/// Unfiltered day images of every user (byte-wise user order, then day
/// order) under one encoding.
pub fn render_base(logs: &[EventLog], vocab: &AppVocabulary, encoding: Scope) -> Result<Vec<DayImage>> {
    let geometry = ImageGeometry::for_vocab(vocab);
    let mut order: Vec<&EventLog> = logs.iter().collect();
    order.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let global = match encoding {
        Scope::Global => Some(compute_frequencies(logs, vocab, Scope::Global, Owner::Dataset)?),
        _ => None,
    };
    let mut jobs = Vec::new();
    for log in order {
        let local = match encoding {
            Scope::Local => Some(compute_frequencies(logs, vocab, Scope::Local, Owner::User(log.user_id.clone()))?),
            _ => None,
        };
        for (day, events) in split_days(log) {
            jobs.push((log.user_id.clone(), day, events, local.clone()));
        }
    }
    jobs.into_par_iter()
        .map(|(user, day, events, local)| {
            let per_day;
            let table: &FrequencyTable = match encoding {
                Scope::Global => global.as_ref().expect("global table"),
                Scope::Local => local.as_ref().expect("local table"),
                Scope::PerDay => {
                    per_day = crate::applog::table_from_events(
                        events,
                        vocab,
                        Scope::PerDay,
                        Owner::UserDay(user.clone(), day),
                    )?;
                    &per_day
                }
            };
            let binned = bin_events(events, vocab, &geometry)?;
            let meta = ImageMeta { user_id: user, day, encoding, filter_size: 0 };
            render_day(&binned, table, &geometry, meta)
        })
        .collect()
}

pub fn save_base(dir: &Path, encoding: Scope, images: &[DayImage]) -> Result<()> {
    let first = images.first().ok_or_else(|| Error::Config("no base images to save".into()))?;
    std::fs::create_dir_all(dir)?;
    let (tensor_path, index_path) = base_paths(dir, encoding);
    let data = images.iter().flat_map(|im| im.pixels.iter().map(|&p| p as f32)).collect();
    let tensor = Tensor { count: images.len(), rows: first.rows, cols: first.cols, data };
    write_tensor(BufWriter::new(File::create(tensor_path)?), &tensor)?;
    let mut w = BufWriter::new(File::create(index_path)?);
    writeln!(w, "user_id,day")?;
    for im in images {
        writeln!(w, "{},{}", im.meta.user_id, im.meta.day)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_base(dir: &Path, encoding: Scope) -> Result<Vec<DayImage>> {
    let (tensor_path, index_path) = base_paths(dir, encoding);
    if !tensor_path.exists() || !index_path.exists() {
        return Err(Error::Config(format!(
            "no rendered {encoding} day images in {}; run `appprint render` first",
            dir.display()
        )));
    }
    let tensor = read_tensor(BufReader::new(File::open(&tensor_path)?))?;
    let mut images = Vec::with_capacity(tensor.count);
    for (i, line) in BufReader::new(File::open(&index_path)?).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse { line: i + 1, msg: msg.into() };
        let (user, day) = line.split_once(',').ok_or_else(|| bad("expected user_id,day"))?;
        let k = images.len();
        if k >= tensor.count {
            return Err(Error::Format("index lists more images than the tensor holds".into()));
        }
        images.push(DayImage {
            rows: tensor.rows,
            cols: tensor.cols,
            pixels: tensor.image(k).iter().map(|&p| p as f64).collect(),
            meta: ImageMeta {
                user_id: user.to_string(),
                day: day.parse().map_err(|_| bad("bad day"))?,
                encoding,
                filter_size: 0,
            },
        });
    }
    if images.len() != tensor.count {
        return Err(Error::Format("index and tensor image counts differ".into()));
    }
    Ok(images)
}

/// Blurs every base image at each of `filter_sizes` and resizes to
/// `side x side`. Images are ordered by base image, then filter size as
/// given.
pub fn augment_pool(base: &[DayImage], filter_sizes: &[u8], side: usize) -> Result<ImagePool> {
    let first = base.first().ok_or_else(|| Error::Config("no base images to augment".into()))?;
    let encoding = first.meta.encoding;
    if base.iter().any(|im| im.meta.encoding != encoding) {
        return Err(Error::Config("base images mix encodings".into()));
    }
    if filter_sizes.is_empty() {
        return Err(Error::Config("no filter sizes selected".into()));
    }
    let mut users: Vec<String> = base.iter().map(|im| im.meta.user_id.clone()).collect();
    users.sort();
    users.dedup();
    let per_image: Vec<Vec<(PoolEntry, Vec<f32>)>> = base
        .par_iter()
        .map(|im| {
            let label = users.binary_search(&im.meta.user_id).expect("user listed");
            augment_with(im, filter_sizes)?
                .into_iter()
                .map(|b| {
                    let px = resize_pixels(&b.pixels, b.rows, b.cols, side, side);
                    let entry = PoolEntry {
                        user_id: b.meta.user_id,
                        label,
                        day: b.meta.day,
                        filter_size: b.meta.filter_size,
                    };
                    Ok((entry, px.into_iter().map(|p| p as f32).collect()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::new();
    let mut pixels = Vec::new();
    for (e, px) in per_image.into_iter().flatten() {
        entries.push(e);
        pixels.extend(px);
    }
    Ok(ImagePool { encoding, users, side, entries, pixels })
}

/// Render, augment and resize in one go.
pub fn build_pool(logs: &[EventLog], vocab: &AppVocabulary, encoding: Scope, filter_sizes: &[u8]) -> Result<ImagePool> {
    augment_pool(&render_base(logs, vocab, encoding)?, filter_sizes, RESIZED_SIDE)
}
