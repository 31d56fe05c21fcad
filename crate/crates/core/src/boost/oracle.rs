//! Brute-force reference for stump selection, kept independent of the
//! binned search: every midpoint of every feature, impurities recomputed
//! from scratch.

use super::stump::{Stump, GINI_TIE};

fn gini_side(counts: &[f64]) -> f64 {
    let w: f64 = counts.iter().sum();
    if w == 0.0 {
        return 0.0;
    }
    let purity: f64 = counts.iter().map(|c| (c / w) * (c / w)).sum();
    w * (1.0 - purity)
}

fn distribution(counts: &[f64]) -> Vec<f64> {
    let w: f64 = counts.iter().sum();
    if w <= 0.0 { vec![1.0 / counts.len() as f64; counts.len()] } else { counts.iter().map(|c| c / w).collect() }
}

/// Exhaustive stump search over row-major `x`. Returns `None` when no
/// feature takes two distinct values or only one class carries weight.
pub fn exhaustive_stump(x: &[f32], n_features: usize, y: &[usize], n_classes: usize, weights: &[f64]) -> Option<Stump> {
    let n = y.len();
    let classes_present = (0..n_classes).filter(|&c| (0..n).any(|i| y[i] == c && weights[i] > 0.0)).count();
    if classes_present < 2 {
        return None;
    }
    let mut best: Option<(f64, Stump)> = None;
    for f in 0..n_features {
        let mut values: Vec<f32> = (0..n).map(|i| x[i * n_features + f]).collect();
        values.sort_by(f32::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let t = (pair[0] as f64 + pair[1] as f64) / 2.0;
            let mut left = vec![0.0; n_classes];
            let mut right = vec![0.0; n_classes];
            for i in 0..n {
                if x[i * n_features + f] as f64 <= t {
                    left[y[i]] += weights[i];
                } else {
                    right[y[i]] += weights[i];
                }
            }
            let g = gini_side(&left) + gini_side(&right);
            if best.as_ref().is_none_or(|(b, _)| g < b - GINI_TIE) {
                let stump = Stump { feature: f, threshold: t, left: distribution(&left), right: distribution(&right) };
                best = Some((g, stump));
            }
        }
    }
    best.map(|(_, s)| s)
}
