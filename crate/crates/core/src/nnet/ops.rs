//! Batched layer kernels. Spatial tensors are `n x c x h x w`, flat ones
//! `n x len`, both contiguous.

use rand::RngCore as _;
use rayon::prelude::*;

use super::real::{gemm, Mat, Real};
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Unrolls 3x3 same-padded patches into a `(c*9) x (n*h*w)` matrix.
pub(crate) fn im2col<T: Real>(input: &[T], d: Dims) -> Vec<T> {
    let (hw, cols) = (d.plane(), d.n * d.plane());
    let mut col = vec![T::zero(); d.c * 9 * cols];
    for (row, dst) in col.chunks_mut(cols).enumerate() {
        let (ci, ky, kx) = (row / 9, (row % 9) / 3, row % 3);
        let x_lo = 1usize.saturating_sub(kx);
        let x_hi = (d.w + 1 - kx).min(d.w);
        for b in 0..d.n {
            let plane = &input[(b * d.c + ci) * hw..(b * d.c + ci + 1) * hw];
            for y in 0..d.h {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= d.h as isize {
                    continue;
                }
                let src = &plane[sy as usize * d.w..(sy as usize + 1) * d.w];
                let out = &mut dst[b * hw + y * d.w..b * hw + (y + 1) * d.w];
                out[x_lo..x_hi].copy_from_slice(&src[x_lo + kx - 1..x_hi + kx - 1]);
            }
        }
    }
    col
}

/// Single-sample patches laid out pixel-major, `(h*w) x (c*9)`: the
/// transpose of [`im2col`] with `n = 1`.
pub(crate) fn im2row<T: Real>(input: &[T], d: Dims) -> Vec<T> {
    let (hw, k) = (d.plane(), d.c * 9);
    let mut rows = vec![T::zero(); hw * k];
    for ci in 0..d.c {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for y in 0..d.h {
            for x in 0..d.w {
                let dst = &mut rows[(y * d.w + x) * k + ci * 9..(y * d.w + x) * k + ci * 9 + 9];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = x as isize + kx as isize - 1;
                        if sx >= 0 && sx < d.w as isize {
                            dst[ky * 3 + kx] = plane[sy as usize * d.w + sx as usize];
                        }
                    }
                }
            }
        }
    }
    rows
}

/// Contiguous dot product with eight independent accumulators.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: T = ra.iter().zip(rb).map(|(&x, &y)| x * y).sum();
    acc.iter().copied().sum::<T>() + tail
}

/// Patch counts below which the weight gradient is formed from dot
/// products instead of a matrix product with a skinny output.
const SMALL_PATCH: usize = 64;

/// Adjoint of [`im2col`]: folds a column-gradient matrix back into an
/// input-shaped gradient.
pub(crate) fn col2im<T: Real>(dcol: &[T], d: Dims) -> Vec<T> {
    let (hw, cols) = (d.plane(), d.n * d.plane());
    let mut dx = vec![T::zero(); d.n * d.c * hw];
    for (plane_idx, dst) in dx.chunks_mut(hw).enumerate() {
        let (b, ci) = (plane_idx / d.c, plane_idx % d.c);
        for k in 0..9 {
            let (ky, kx) = (k / 3, k % 3);
            let row = &dcol[(ci * 9 + k) * cols + b * hw..(ci * 9 + k) * cols + (b + 1) * hw];
            let x_lo = 1usize.saturating_sub(kx);
            let x_hi = (d.w + 1 - kx).min(d.w);
            for y in 0..d.h {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= d.h as isize {
                    continue;
                }
                let src = &row[y * d.w + x_lo..y * d.w + x_hi];
                let out = &mut dst[sy as usize * d.w + x_lo + kx - 1..sy as usize * d.w + x_hi + kx - 1];
                for (o, &g) in out.iter_mut().zip(src) {
                    *o += g;
                }
            }
        }
    }
    dx
}

/// Samples per work unit in the convolution backward pass. Partial weight
/// gradients are summed in unit order, so the result does not depend on
/// the thread count.
const CONV_GROUP: usize = 8;

/// Same-padded 3x3 convolution, one patch matrix per sample.
pub(crate) fn conv_forward<T: Real>(input: &[T], d: Dims, weights: &[T], bias: &[T]) -> Vec<T> {
    let cout = bias.len();
    let (hw, k) = (d.plane(), d.c * 9);
    let one = Dims { n: 1, ..d };
    let mut out = vec![T::zero(); d.n * cout * hw];
    out.par_chunks_mut(cout * hw).enumerate().for_each(|(b, dst)| {
        let col = im2col(&input[b * d.c * hw..(b + 1) * d.c * hw], one);
        for (row, &bv) in dst.chunks_mut(hw).zip(bias) {
            row.fill(bv);
        }
        gemm(Mat::rm(weights, cout, k), Mat::rm(&col, k, hw), T::one(), dst);
    });
    out
}

/// Returns `(dW, db, dX)`; `dX` only when `need_input_grad`. Patch
/// matrices are rebuilt from `input` rather than kept from the forward pass.
pub(crate) fn conv_backward<T: Real>(
    dout: &[T],
    input: &[T],
    d: Dims,
    weights: &[T],
    cout: usize,
    need_input_grad: bool,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
    let (hw, k) = (d.plane(), d.c * 9);
    let one = Dims { n: 1, ..d };
    let in_len = d.c * hw;
    let group = |g: usize, mut dx: Option<&mut [T]>| {
        let mut dw = vec![T::zero(); cout * k];
        let mut db = vec![T::zero(); cout];
        for b in g * CONV_GROUP..((g + 1) * CONV_GROUP).min(d.n) {
            let dy = &dout[b * cout * hw..(b + 1) * cout * hw];
            let sample = &input[b * in_len..(b + 1) * in_len];
            if k < SMALL_PATCH {
                let col = im2col(sample, one);
                for (co, acc) in dw.chunks_mut(k).enumerate() {
                    for (j, a) in acc.iter_mut().enumerate() {
                        *a += dot(&dy[co * hw..(co + 1) * hw], &col[j * hw..(j + 1) * hw]);
                    }
                }
            } else {
                gemm(Mat::rm(dy, cout, hw), Mat::rm(&im2row(sample, one), hw, k), T::one(), &mut dw);
            }
            for (acc, row) in db.iter_mut().zip(dy.chunks(hw)) {
                *acc += row.iter().copied().sum::<T>();
            }
            if let Some(dx) = dx.as_deref_mut() {
                let mut dcol = vec![T::zero(); k * hw];
                gemm(Mat::rm(weights, cout, k).t(), Mat::rm(dy, cout, hw), T::zero(), &mut dcol);
                let local = b - g * CONV_GROUP;
                dx[local * in_len..(local + 1) * in_len].copy_from_slice(&col2im(&dcol, one));
            }
        }
        (dw, db)
    };
    let groups = d.n.div_ceil(CONV_GROUP);
    let (partials, dx): (Vec<_>, _) = if need_input_grad {
        let mut dx = vec![T::zero(); d.n * in_len];
        let partials = dx
            .par_chunks_mut(CONV_GROUP * in_len)
            .enumerate()
            .map(|(g, chunk)| group(g, Some(chunk)))
            .collect();
        (partials, Some(dx))
    } else {
        ((0..groups).into_par_iter().map(|g| group(g, None)).collect(), None)
    };
    let mut dw = vec![T::zero(); cout * k];
    let mut db = vec![T::zero(); cout];
    for (pw, pb) in partials {
        dw.iter_mut().zip(pw).for_each(|(a, v)| *a += v);
        db.iter_mut().zip(pb).for_each(|(a, v)| *a += v);
    }
    (dw, db, dx)
}

pub(crate) fn leaky_relu<T: Real>(x: &[T], alpha: T) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { v * alpha }).collect()
}

/// Gradient through a (leaky) ReLU given its output; `alpha = 0` is ReLU.
pub(crate) fn rectifier_backward<T: Real>(dout: &[T], out: &[T], alpha: T) -> Vec<T> {
    dout.iter()
        .zip(out)
        .map(|(&g, &y)| if y > T::zero() { g } else { g * alpha })
        .collect()
}

pub(crate) fn relu<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero())).collect()
}

/// 2x2/2 max pooling with floor sizing. Returns the output and the flat
/// input index of each window's maximum (first in scan order on ties).
pub(crate) fn max_pool<T: Real>(input: &[T], d: Dims) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (d.h / 2, d.w / 2);
    let planes = d.n * d.c;
    let mut out = vec![T::zero(); planes * oh * ow];
    let mut arg = vec![0u32; planes * oh * ow];
    out.par_chunks_mut(oh * ow)
        .zip(arg.par_chunks_mut(oh * ow))
        .enumerate()
        .for_each(|(p, (o, a))| {
            let base = p * d.h * d.w;
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = base + 2 * y * d.w + 2 * x;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * y + dy) * d.w + 2 * x + dx;
                        if input[i] > input[best] {
                            best = i;
                        }
                    }
                    o[y * ow + x] = input[best];
                    a[y * ow + x] = best as u32;
                }
            }
        });
    (out, arg)
}

pub(crate) fn max_pool_backward<T: Real>(dout: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&g, &i) in dout.iter().zip(arg) {
        dx[i as usize] += g;
    }
    dx
}

/// Inverted-dropout mask: `0` with probability `rate`, else `1/(1-rate)`.
pub(crate) fn dropout_mask<T: Real>(len: usize, rate: f64, seed: u64, stream: u64) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    // drop when a uniform u32 falls below rate * 2^32
    let cut = (rate * 4_294_967_296.0).round() as u64;
    let mut r = rng::stream(seed, stream);
    (0..len)
        .map(|_| if (r.next_u32() as u64) < cut { T::zero() } else { keep })
        .collect()
}

/// `Y = X W + b` for `X: n x fan_in`, `W: fan_in x width`.
pub(crate) fn dense_forward<T: Real>(x: &[T], n: usize, weights: &[T], bias: &[T]) -> Vec<T> {
    let width = bias.len();
    let fan_in = weights.len() / width;
    let mut y = vec![T::zero(); n * width];
    for row in y.chunks_mut(width) {
        row.copy_from_slice(bias);
    }
    gemm(Mat::rm(x, n, fan_in), Mat::rm(weights, fan_in, width), T::one(), &mut y);
    y
}

pub(crate) fn dense_backward<T: Real>(
    dout: &[T],
    x: &[T],
    n: usize,
    weights: &[T],
    width: usize,
    need_input_grad: bool,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
    let fan_in = weights.len() / width;
    let mut dw = vec![T::zero(); fan_in * width];
    gemm(Mat::rm(x, n, fan_in).t(), Mat::rm(dout, n, width), T::zero(), &mut dw);
    let mut db = vec![T::zero(); width];
    for row in dout.chunks(width) {
        for (d, &g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    let dx = need_input_grad.then(|| {
        let mut dx = vec![T::zero(); n * fan_in];
        gemm(Mat::rm(dout, n, width), Mat::rm(weights, fan_in, width).t(), T::zero(), &mut dx);
        dx
    });
    (dw, db, dx)
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax<T: Real>(x: &[T], width: usize) -> Vec<T> {
    let mut out = x.to_vec();
    for row in out.chunks_mut(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub(crate) const PROB_FLOOR: f64 = 1e-12;

/// Mean categorical cross-entropy of `probs` against `targets`.
pub fn cross_entropy<T: Real>(probs: &[T], targets: &[T], width: usize) -> f64 {
    let n = probs.len() / width;
    let total: f64 = probs
        .iter()
        .zip(targets)
        .filter(|(_, &y)| y != T::zero())
        .map(|(&p, &y)| -y.as_f64() * p.as_f64().max(PROB_FLOOR).ln())
        .sum();
    total / n as f64
}
