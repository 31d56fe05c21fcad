use super::DayImage;

pub const RESIZED_SIDE: usize = 50;

/// Per output index, the `(source index, weight)` pairs of an area-average
/// resample from `n` to `m` samples. Output `o` spans `[o*n/m, (o+1)*n/m)`
/// in source units; weights are exact overlap fractions of that span.
fn area_weights(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    // work in units of 1/m so every boundary is an integer
    (0..m)
        .map(|o| {
            let (lo, hi) = (o * n, (o + 1) * n);
            (lo / m..hi.div_ceil(m))
                .filter_map(|s| {
                    let overlap = hi.min((s + 1) * m).saturating_sub(lo.max(s * m));
                    (overlap > 0).then(|| (s, overlap as f64 / n as f64))
                })
                .collect()
        })
        .collect()
}

/// Area-averaging resample of a row-major `rows x cols` buffer.
pub fn resize_pixels(pixels: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    assert_eq!(pixels.len(), rows * cols);
    let wr = area_weights(rows, out_rows);
    let wc = area_weights(cols, out_cols);

    let mut tmp = vec![0.0; out_rows * cols];
    for (o, taps) in wr.iter().enumerate() {
        let dst = &mut tmp[o * cols..(o + 1) * cols];
        for &(s, w) in taps {
            for (d, p) in dst.iter_mut().zip(&pixels[s * cols..(s + 1) * cols]) {
                *d += w * p;
            }
        }
    }
    let mut out = vec![0.0; out_rows * out_cols];
    for y in 0..out_rows {
        let src = &tmp[y * cols..(y + 1) * cols];
        for (o, taps) in wc.iter().enumerate() {
            out[y * out_cols + o] = taps.iter().map(|&(s, w)| w * src[s]).sum::<f64>().clamp(0.0, 1.0);
        }
    }
    out
}

pub fn resize(image: &DayImage, out_rows: usize, out_cols: usize) -> DayImage {
    DayImage {
        rows: out_rows,
        cols: out_cols,
        pixels: resize_pixels(&image.pixels, image.rows, image.cols, out_rows, out_cols),
        meta: image.meta.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_partition_each_output() {
        for (n, m) in [(480, 50), (100, 50), (7, 50), (3, 2), (50, 50)] {
            for taps in area_weights(n, m) {
                assert!((taps.iter().map(|t| t.1).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_by_two_to_one() {
        assert_eq!(resize_pixels(&[0.0, 0.0, 1.0, 1.0], 2, 2, 1, 1), vec![0.5]);
    }

    #[test]
    fn constant_stays_constant() {
        let out = resize_pixels(&vec![0.2; 480 * 37], 480, 37, 50, 50);
        assert!(out.iter().all(|p| (p - 0.2).abs() < 1e-12));
    }

    #[test]
    fn mean_is_preserved() {
        let px: Vec<f64> = (0..480 * 113).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let mean_in = px.iter().sum::<f64>() / px.len() as f64;
        let out = resize_pixels(&px, 480, 113, 50, 50);
        let mean_out = out.iter().sum::<f64>() / out.len() as f64;
        assert!((mean_in - mean_out).abs() < 1e-9);
    }
}
