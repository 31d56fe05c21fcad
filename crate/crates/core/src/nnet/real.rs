use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rayon::prelude::*;

/// Floating-point element type of a network: `f32` for training speed,
/// `f64` for gradient checking.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Width in bytes; also the precision tag of checkpoints.
    const BYTES: usize;

    /// `C = alpha * A * B + beta * C` on strided row/column views.
    ///
    /// # Safety
    /// Pointers and strides must address valid `m x k`, `k x n` and
    /// `m x n` matrices, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize, k: usize, n: usize, alpha: Self,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self,
        c: *mut Self, rsc: isize, csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize, k: usize, n: usize, alpha: f32,
        a: *const f32, rsa: isize, csa: isize,
        b: *const f32, rsb: isize, csb: isize,
        beta: f32,
        c: *mut f32, rsc: isize, csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize, k: usize, n: usize, alpha: f64,
        a: *const f64, rsa: isize, csa: isize,
        b: *const f64, rsb: isize, csb: isize,
        beta: f64,
        c: *mut f64, rsc: isize, csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Strided read-only matrix view.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a, T> Mat<'a, T> {
    /// Row-major `rows x cols`.
    pub fn rm(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix buffer too small");
        Mat { data, rows, cols, rs: cols as isize, cs: 1 }
    }

    pub fn t(self) -> Self {
        Mat { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }
}

// Output blocks are fixed-size so the split never depends on the worker
// count; every output element is reduced by exactly one gemm call.
const ROW_BLOCK: usize = 64;
const COL_BLOCK: usize = 2048;

struct SendPtr<T>(*mut T);
unsafe impl<T> Send for SendPtr<T> {}
unsafe impl<T> Sync for SendPtr<T> {}

/// `C = A * B + beta * C` with `C` row-major `a.rows x b.cols`.
pub(crate) fn gemm<T: Real>(a: Mat<'_, T>, b: Mat<'_, T>, beta: T, c: &mut [T]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(c.len(), m * n, "output buffer size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x = *x * beta);
        return;
    }
    let c_ptr = SendPtr(c.as_mut_ptr());
    let call = |r0: usize, rows: usize, c0: usize, cols: usize| unsafe {
        let c_ptr = &c_ptr;
        T::gemm_raw(
            rows, k, cols, T::one(),
            a.data.as_ptr().offset(r0 as isize * a.rs), a.rs, a.cs,
            b.data.as_ptr().offset(c0 as isize * b.cs), b.rs, b.cs,
            beta,
            c_ptr.0.add(r0 * n + c0), n as isize, 1,
        )
    };
    if m >= 2 * ROW_BLOCK {
        (0..m.div_ceil(ROW_BLOCK)).into_par_iter().for_each(|blk| {
            let r0 = blk * ROW_BLOCK;
            call(r0, ROW_BLOCK.min(m - r0), 0, n);
        });
    } else if n >= 2 * COL_BLOCK {
        (0..n.div_ceil(COL_BLOCK)).into_par_iter().for_each(|blk| {
            let c0 = blk * COL_BLOCK;
            call(0, m, c0, COL_BLOCK.min(n - c0));
        });
    } else {
        call(0, m, 0, n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product_in_all_split_modes() {
        for (m, k, n) in [(3, 4, 5), (300, 7, 9), (5, 6, 5000)] {
            let a: Vec<f64> = (0..m * k).map(|i| (i % 13) as f64 - 6.0).collect();
            let b: Vec<f64> = (0..k * n).map(|i| (i % 7) as f64 * 0.5).collect();
            let mut c = vec![0.0; m * n];
            gemm(Mat::rm(&a, m, k), Mat::rm(&b, k, n), 0.0, &mut c);
            assert_eq!(c, naive(&a, &b, m, k, n));
        }
    }

    #[test]
    fn transposed_views() {
        // A^T * B with A stored 2x3
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0];
        let mut c = vec![0.0; 6];
        gemm(Mat::rm(&a, 2, 3).t(), Mat::rm(&b, 2, 2), 0.0, &mut c);
        assert_eq!(c, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }

    #[test]
    fn beta_accumulates() {
        let a = [1.0f32, 1.0];
        let b = [2.0f32, 3.0];
        let mut c = vec![10.0f32];
        gemm(Mat::rm(&a, 1, 2), Mat::rm(&b, 2, 1), 1.0, &mut c);
        assert_eq!(c, vec![15.0]);
    }
}
