//! Day images.
//!
//! A day image has one row per 3-minute bin (480 rows) and one column per
//! app in the vocabulary. This is the transpose of the usual `(app, time)`
//! pixel notation; row `t`, column `a` holds the intensity of app `a` in
//! bin `t`. Bins are 0-indexed: 00:00 to 00:02 is row 0.

mod export;
mod kernel;
mod resize;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use export::{pgm_bytes, read_pgm, read_tensor, write_pgm, write_tensor, Tensor, TENSOR_MAGIC};
pub use kernel::{blur, correlate2d, gaussian_kernel, total_variation, GaussianKernel, MAX_FILTER_SIZE};
pub use resize::{resize, resize_pixels, RESIZED_SIDE};

use crate::applog::{AppEvent, AppVocabulary, FrequencyTable, Scope};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageGeometry {
    pub bin_minutes: u32,
    pub rows: usize,
    pub cols: usize,
}

impl ImageGeometry {
    pub const MINUTES_PER_DAY: u32 = 1440;
    pub const BIN_MINUTES: u32 = 3;

    pub fn for_vocab(vocab: &AppVocabulary) -> Self {
        Self::with_cols(vocab.len())
    }

    pub fn with_cols(cols: usize) -> Self {
        let rows = (Self::MINUTES_PER_DAY / Self::BIN_MINUTES) as usize;
        ImageGeometry { bin_minutes: Self::BIN_MINUTES, rows, cols }
    }

    pub fn bin_of(&self, minute_of_day: u32) -> usize {
        (minute_of_day / self.bin_minutes) as usize
    }
}

/// Within-bin event counts keyed by `(bin, app)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinnedDay {
    pub counts: BTreeMap<(usize, usize), u32>,
}

impl BinnedDay {
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    /// `(app, count)` pairs of each non-empty bin, in bin order.
    pub fn bins(&self) -> impl Iterator<Item = (usize, Vec<(usize, u32)>)> + '_ {
        let mut it = self.counts.iter().peekable();
        std::iter::from_fn(move || {
            let (&(bin, app), &c) = it.next()?;
            let mut apps = vec![(app, c)];
            while let Some((&(b, a), &c)) = it.peek().copied() {
                if b != bin {
                    break;
                }
                apps.push((a, c));
                it.next();
            }
            Some((bin, apps))
        })
    }
}

pub fn bin_events(events: &[AppEvent], vocab: &AppVocabulary, geometry: &ImageGeometry) -> Result<BinnedDay> {
    let mut binned = BinnedDay::default();
    for e in events {
        let app = vocab.encode(&e.package).ok_or_else(|| Error::UnknownApp(e.package.clone()))?;
        let bin = geometry.bin_of(e.minute_of_day());
        *binned.counts.entry((bin, app)).or_insert(0) += 1;
    }
    Ok(binned)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub user_id: String,
    pub day: NaiveDate,
    pub encoding: Scope,
    /// 0 for an unfiltered render, 1..=15 for blurred variants.
    pub filter_size: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayImage {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, values in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub meta: ImageMeta,
}

impl DayImage {
    pub fn zeros(rows: usize, cols: usize, meta: ImageMeta) -> Self {
        DayImage { rows, cols, pixels: vec![0.0; rows * cols], meta }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.cols + col]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}

/// Renders one day. A bin holding a single distinct app gets that app's
/// frequency from `table`; a bin holding several apps gets
/// `f_i * g_i / sum_j f_j * g_j`, where `f` are within-bin counts and `g`
/// the table frequencies, so the bin's intensities sum to one.
pub fn render_day(binned: &BinnedDay, table: &FrequencyTable, geometry: &ImageGeometry, meta: ImageMeta) -> Result<DayImage> {
    if table.values.len() != geometry.cols {
        return Err(Error::Param(format!(
            "table has {} apps but the image has {} columns",
            table.values.len(),
            geometry.cols
        )));
    }
    let mut img = DayImage::zeros(geometry.rows, geometry.cols, meta);
    for (bin, apps) in binned.bins() {
        if bin >= geometry.rows {
            return Err(Error::Param(format!("bin {bin} outside the image")));
        }
        let row = &mut img.pixels[bin * geometry.cols..(bin + 1) * geometry.cols];
        if let [(app, _)] = apps[..] {
            row[app] = table.get(app);
            continue;
        }
        let denom: f64 = apps.iter().map(|&(a, c)| c as f64 * table.get(a)).sum();
        if denom <= 0.0 {
            return Err(Error::DegenerateBin { bin });
        }
        for &(a, c) in &apps {
            row[a] = c as f64 * table.get(a) / denom;
        }
    }
    Ok(img)
}

/// Blurred variants with filter sizes 1 through 15. The unfiltered input is
/// not part of the output.
pub fn augment(image: &DayImage) -> Result<Vec<DayImage>> {
    let sizes: Vec<u8> = (1..=MAX_FILTER_SIZE).collect();
    augment_with(image, &sizes)
}

pub fn augment_with(image: &DayImage, filter_sizes: &[u8]) -> Result<Vec<DayImage>> {
    if image.meta.filter_size != 0 {
        return Err(Error::Param(format!(
            "augment expects an unfiltered image, got filter size {}",
            image.meta.filter_size
        )));
    }
    filter_sizes
        .iter()
        .map(|&k| Ok(blur(image, &gaussian_kernel(k)?)))
        .collect()
}
