use super::DayImage;
use crate::{Error, Result};

pub const MAX_FILTER_SIZE: u8 = 15;

/// Gaussian blur kernel of filter size `k`: a `(2k+1) x (2k+1)` grid with
/// `sigma = k / 2`, normalized to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub size: u8,
    pub sigma: f64,
    pub side: usize,
    /// Row-major `side x side`.
    pub weights: Vec<f64>,
    /// Normalized 1-D factor; `weights` is its outer product with itself.
    pub profile: Vec<f64>,
}

impl GaussianKernel {
    pub fn radius(&self) -> usize {
        self.side / 2
    }

    /// Weight at offset `(dy, dx)` from the center.
    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((dy + r) * self.side as isize + dx + r) as usize]
    }
}

pub fn gaussian_kernel(k: u8) -> Result<GaussianKernel> {
    if !(1..=MAX_FILTER_SIZE).contains(&k) {
        return Err(Error::Param(format!("filter size {k} outside 1..={MAX_FILTER_SIZE}")));
    }
    let r = k as isize;
    let side = 2 * k as usize + 1;
    let sigma = k as f64 / 2.0;
    let two_var = 2.0 * sigma * sigma;

    let mut weights = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            weights.push((-((dx * dx + dy * dy) as f64) / two_var).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut profile: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / two_var).exp()).collect();
    let total: f64 = profile.iter().sum();
    profile.iter_mut().for_each(|w| *w /= total);

    Ok(GaussianKernel { size: k, sigma, side, weights, profile })
}

/// Whole-sample symmetric reflection: `... b a | a b c ... | c b ...`.
/// Works for any offset, including radii larger than the axis.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize { m as usize } else { (period - 1 - m) as usize }
}

fn correlate_rows(src: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..rows {
        let line = &src[y * cols..(y + 1) * cols];
        let dst = &mut out[y * cols..(y + 1) * cols];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, w) in taps.iter().enumerate() {
                acc += w * line[reflect(x as isize + t as isize - r, cols)];
            }
            *d = acc;
        }
    }
    out
}

fn correlate_cols(src: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..rows {
        let dst = &mut out[y * cols..(y + 1) * cols];
        for (t, w) in taps.iter().enumerate() {
            let sy = reflect(y as isize + t as isize - r, rows);
            let line = &src[sy * cols..(sy + 1) * cols];
            for (d, s) in dst.iter_mut().zip(line) {
                *d += w * s;
            }
        }
    }
    out
}

/// Gaussian blur with reflected borders, computed as two 1-D passes.
pub fn blur(image: &DayImage, kernel: &GaussianKernel) -> DayImage {
    let tmp = correlate_rows(&image.pixels, image.rows, image.cols, &kernel.profile);
    let mut pixels = correlate_cols(&tmp, image.rows, image.cols, &kernel.profile);
    pixels.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
    let mut meta = image.meta.clone();
    meta.filter_size = kernel.size;
    DayImage { rows: image.rows, cols: image.cols, pixels, meta }
}

/// Direct 2-D correlation of a row-major image with a square kernel, with
/// the same border rule as [`blur`]. Quadratic in the kernel side; kept as a
/// reference for the separable path.
pub fn correlate2d(pixels: &[f64], rows: usize, cols: usize, weights: &[f64], side: usize) -> Vec<f64> {
    let r = (side / 2) as isize;
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        for x in 0..cols {
            let mut acc = 0.0;
            for ky in 0..side {
                let sy = reflect(y as isize + ky as isize - r, rows);
                for kx in 0..side {
                    let sx = reflect(x as isize + kx as isize - r, cols);
                    acc += weights[ky * side + kx] * pixels[sy * cols + sx];
                }
            }
            out[y * cols + x] = acc;
        }
    }
    out
}

/// Anisotropic total variation: sum of absolute horizontal and vertical
/// neighbor differences.
pub fn total_variation(pixels: &[f64], rows: usize, cols: usize) -> f64 {
    let mut tv = 0.0;
    for y in 0..rows {
        for x in 0..cols {
            let p = pixels[y * cols + x];
            if x + 1 < cols {
                tv += (pixels[y * cols + x + 1] - p).abs();
            }
            if y + 1 < rows {
                tv += (pixels[(y + 1) * cols + x] - p).abs();
            }
        }
    }
    tv
}
