use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Maximum candidate groups per feature in histogram mode.
pub const MAX_BINS: usize = 256;
/// Gini values closer than this count as tied.
pub const GINI_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSearch {
    /// Distinct values grouped into at most [`MAX_BINS`] quantile bins.
    #[default]
    Histogram,
    /// Every midpoint between consecutive distinct values.
    Exact,
}

/// A depth-1 tree. Samples with `x[feature] <= threshold` fall left.
#[derive(Debug, Clone, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted class distribution of each leaf.
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Stump {
    pub fn leaf(&self, sample: &[f32]) -> &[f64] {
        if sample[self.feature] as f64 <= self.threshold { &self.left } else { &self.right }
    }

    /// Most probable class of the sample's leaf, lowest index on ties.
    pub fn predict_one(&self, sample: &[f32]) -> usize {
        argmax(self.leaf(sample))
    }
}

/// Per-feature bin index of every sample plus the cut points between
/// consecutive bins. Built once per training set; rounds only change the
/// sample weights.
#[derive(Debug, Clone)]
pub struct FeatureBins {
    pub n_samples: usize,
    pub n_features: usize,
    /// `bins[f * n_samples + i]`.
    bins: Vec<u32>,
    /// `cuts[f][g]` separates bin `g` from bin `g + 1`.
    cuts: Vec<Vec<f64>>,
}

impl FeatureBins {
    pub fn new(x: &[f32], n_features: usize, search: ThresholdSearch) -> Result<Self> {
        if n_features == 0 || x.len() % n_features != 0 {
            return Err(Error::shape("stump", format!("{} values do not form rows of {n_features}", x.len())));
        }
        let n = x.len() / n_features;
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Param(format!("non-finite feature value {v}")));
        }
        let per_feature: Vec<(Vec<u32>, Vec<f64>)> =
            (0..n_features).into_par_iter().map(|f| bin_feature(x, n, n_features, f, search)).collect();
        let mut bins = Vec::with_capacity(n * n_features);
        let mut cuts = Vec::with_capacity(n_features);
        for (b, c) in per_feature {
            bins.extend(b);
            cuts.push(c);
        }
        Ok(FeatureBins { n_samples: n, n_features, bins, cuts })
    }

    pub fn cuts(&self, feature: usize) -> &[f64] {
        &self.cuts[feature]
    }
}

fn bin_feature(x: &[f32], n: usize, stride: usize, f: usize, search: ThresholdSearch) -> (Vec<u32>, Vec<f64>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a * stride + f].total_cmp(&x[b * stride + f]));
    // distinct levels with their sample counts, ascending
    let mut levels: Vec<(f32, usize)> = Vec::new();
    for &i in &order {
        let v = x[i * stride + f];
        match levels.last_mut() {
            Some((lv, c)) if *lv == v => *c += 1,
            _ => levels.push((v, 1)),
        }
    }
    let group_of_level: Vec<u32> = match search {
        ThresholdSearch::Histogram if levels.len() > MAX_BINS => {
            // close a group once it reaches its share of samples
            let mut out = Vec::with_capacity(levels.len());
            let (mut g, mut cum) = (0u32, 0usize);
            for &(_, c) in &levels {
                out.push(g);
                cum += c;
                if (g as usize) < MAX_BINS - 1 && cum * MAX_BINS >= (g as usize + 1) * n {
                    g += 1;
                }
            }
            out
        }
        _ => (0..levels.len() as u32).collect(),
    };
    let mut cuts = Vec::new();
    for j in 1..levels.len() {
        if group_of_level[j] != group_of_level[j - 1] {
            cuts.push((levels[j - 1].0 as f64 + levels[j].0 as f64) / 2.0);
        }
    }
    let mut bins = vec![0u32; n];
    let mut level = 0;
    for &i in &order {
        if x[i * stride + f] != levels[level].0 {
            level += 1;
        }
        bins[i] = group_of_level[level];
    }
    (bins, cuts)
}

/// Weighted Gini impurity of a split, `sum_side W_s * (1 - sum_k p_sk^2)`.
pub fn split_gini(left: &[f64], right: &[f64]) -> f64 {
    let side = |c: &[f64]| {
        let w: f64 = c.iter().sum();
        if w <= 0.0 { 0.0 } else { w - c.iter().map(|v| v * v).sum::<f64>() / w }
    };
    side(left) + side(right)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s <= 0.0 { vec![1.0 / v.len() as f64; v.len()] } else { v.iter().map(|x| x / s).collect() }
}

fn check_inputs(n: usize, y: &[usize], n_classes: usize, weights: &[f64]) -> Result<()> {
    if y.len() != n || weights.len() != n {
        return Err(Error::shape("stump", format!("{n} samples, {} labels, {} weights", y.len(), weights.len())));
    }
    if let Some(&l) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Param(format!("label {l} outside 0..{n_classes}")));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::Param("sample weights must be positive and finite".into()));
    }
    Ok(())
}

/// Best split over pre-binned features. Scans features in order and cut
/// points in ascending order; a candidate replaces the incumbent only when
/// it is lower by more than [`GINI_TIE`].
pub fn best_stump(bins: &FeatureBins, y: &[usize], n_classes: usize, weights: &[f64]) -> Result<Stump> {
    let n = bins.n_samples;
    check_inputs(n, y, n_classes, weights)?;
    let mut total = vec![0.0; n_classes];
    for (&l, &w) in y.iter().zip(weights) {
        total[l] += w;
    }
    let trivial = || {
        let dist = normalized(&total);
        Stump { feature: 0, threshold: 0.0, left: dist.clone(), right: dist }
    };
    if total.iter().filter(|&&w| w > 0.0).count() < 2 {
        return Ok(trivial());
    }

    // per feature: (gini, cut index)
    let per_feature: Vec<Option<(f64, usize)>> = (0..bins.n_features)
        .into_par_iter()
        .map(|f| {
            let cuts = &bins.cuts[f];
            if cuts.is_empty() {
                return None;
            }
            let groups = cuts.len() + 1;
            let mut hist = vec![0.0; groups * n_classes];
            for (i, &b) in bins.bins[f * n..(f + 1) * n].iter().enumerate() {
                hist[b as usize * n_classes + y[i]] += weights[i];
            }
            let mut left = vec![0.0; n_classes];
            let mut right = total.clone();
            let mut best: Option<(f64, usize)> = None;
            for g in 0..groups - 1 {
                for k in 0..n_classes {
                    let h = hist[g * n_classes + k];
                    left[k] += h;
                    right[k] -= h;
                }
                let gini = split_gini(&left, &right);
                if best.is_none_or(|(b, _)| gini < b - GINI_TIE) {
                    best = Some((gini, g));
                }
            }
            best
        })
        .collect();

    let mut best: Option<(f64, usize, usize)> = None;
    for (f, cand) in per_feature.into_iter().enumerate() {
        if let Some((gini, g)) = cand {
            if best.is_none_or(|(b, _, _)| gini < b - GINI_TIE) {
                best = Some((gini, f, g));
            }
        }
    }
    let Some((_, feature, g)) = best else { return Ok(trivial()) };
    let mut left = vec![0.0; n_classes];
    let mut right = vec![0.0; n_classes];
    for (i, &b) in bins.bins[feature * n..(feature + 1) * n].iter().enumerate() {
        if b as usize <= g { left[y[i]] += weights[i] } else { right[y[i]] += weights[i] }
    }
    Ok(Stump { feature, threshold: bins.cuts[feature][g], left: normalized(&left), right: normalized(&right) })
}

/// One-off stump fit on row-major `x` with `n_features` columns.
pub fn train_stump(
    x: &[f32],
    n_features: usize,
    y: &[usize],
    n_classes: usize,
    weights: &[f64],
    search: ThresholdSearch,
) -> Result<Stump> {
    best_stump(&FeatureBins::new(x, n_features, search)?, y, n_classes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_line() {
        let s = train_stump(&[0.0, 1.0, 2.0, 3.0], 1, &[0, 0, 1, 1], 2, &[0.25; 4], ThresholdSearch::Exact).unwrap();
        assert_eq!(s.threshold, 1.5);
        assert_eq!(s.left, vec![1.0, 0.0]);
        assert_eq!(s.right, vec![0.0, 1.0]);
    }

    #[test]
    fn single_class_gives_one_hot_trivial_stump() {
        let s = train_stump(&[0.0, 1.0, 2.0], 1, &[2, 2, 2], 3, &[1.0 / 3.0; 3], ThresholdSearch::Histogram).unwrap();
        assert_eq!(s.left, vec![0.0, 0.0, 1.0]);
        assert_eq!(s.right, s.left);
        assert!(s.threshold.is_finite());
    }

    #[test]
    fn ties_go_to_the_lowest_feature() {
        // both features separate the classes perfectly
        let x = [0.0, 5.0, 1.0, 6.0, 2.0, 7.0, 3.0, 8.0];
        let s = train_stump(&x, 2, &[0, 0, 1, 1], 2, &[0.25; 4], ThresholdSearch::Exact).unwrap();
        assert_eq!((s.feature, s.threshold), (0, 1.5));
    }

    #[test]
    fn histogram_caps_the_cut_count() {
        let x: Vec<f32> = (0..1000).map(|i| i as f32).collect();
        let bins = FeatureBins::new(&x, 1, ThresholdSearch::Histogram).unwrap();
        assert_eq!(bins.cuts(0).len(), MAX_BINS - 1);
        let exact = FeatureBins::new(&x, 1, ThresholdSearch::Exact).unwrap();
        assert_eq!(exact.cuts(0).len(), 999);
    }

    #[test]
    fn rejects_bad_weights_and_labels() {
        assert!(train_stump(&[0.0, 1.0], 1, &[0, 1], 2, &[0.5, 0.0], ThresholdSearch::Exact).is_err());
        assert!(train_stump(&[0.0, 1.0], 1, &[0, 2], 2, &[0.5, 0.5], ThresholdSearch::Exact).is_err());
        assert!(train_stump(&[0.0, f32::NAN], 1, &[0, 1], 2, &[0.5, 0.5], ThresholdSearch::Exact).is_err());
    }
}
