use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    /// A zero denominator forced one of the ratios to 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_classes: usize,
    pub n_samples: usize,
    /// Row = true class, column = predicted class.
    pub confusion: Vec<Vec<u64>>,
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) }
}

/// F from counts, `2TP / (2TP + FP + FN)`: the harmonic mean of precision
/// and recall without the intermediate rounding.
fn f_score(tp: u64, fp: u64, fn_: u64) -> (f64, bool) {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

pub fn compute_metrics(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Usage(format!("{} true labels but {} predictions", y_true.len(), y_pred.len())));
    }
    if let Some(&l) = y_true.iter().chain(y_pred).find(|&&l| l >= n_classes) {
        return Err(Error::Param(format!("label {l} outside 0..{n_classes}")));
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let classes: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let fp = (0..n_classes).map(|r| confusion[r][c]).sum::<u64>() - tp;
            let fn_ = confusion[c].iter().sum::<u64>() - tp;
            let (precision, u1) = ratio(tp, tp + fp);
            let (recall, u2) = ratio(tp, tp + fn_);
            let (f, u3) = f_score(tp, fp, fn_);
            ClassMetrics { tp, fp, fn_, precision, recall, f, undefined: u1 || u2 || u3 }
        })
        .collect();
    let k = n_classes.max(1) as f64;
    let mean = |g: fn(&ClassMetrics) -> f64| classes.iter().map(g).sum::<f64>() / k;
    let (tp, fp, fn_) = classes.iter().fold((0, 0, 0), |a, c| (a.0 + c.tp, a.1 + c.fp, a.2 + c.fn_));
    let n = y_true.len() as u64;
    let correct = tp;
    let report = MetricsReport {
        n_classes,
        n_samples: y_true.len(),
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f: mean(|c| c.f),
        micro_precision: ratio(tp, tp + fp).0,
        micro_recall: ratio(tp, tp + fn_).0,
        micro_f: f_score(tp, fp, fn_).0,
        accuracy: ratio(correct, n).0,
        confusion,
        classes,
    };
    if report.micro_f != report.accuracy {
        return Err(Error::Param(format!(
            "micro-F {} differs from accuracy {}",
            report.micro_f, report.accuracy
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_with_eight_hits_two_false_alarms_two_misses() {
        // class 0: TP 8, FP 2, FN 2
        let mut t = vec![0; 10];
        let mut p = vec![0; 8];
        p.extend([1, 1]);
        t.extend([1, 1]);
        p.extend([0, 0]);
        let m = compute_metrics(&t, &p, 2).unwrap();
        let c = &m.classes[0];
        assert_eq!((c.tp, c.fp, c.fn_), (8, 2, 2));
        assert_eq!((c.precision, c.recall, c.f), (0.8, 0.8, 0.8));
    }

    #[test]
    fn perfect_predictions() {
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let m = compute_metrics(&y, &y, 3).unwrap();
        assert_eq!((m.macro_f, m.micro_f), (1.0, 1.0));
    }

    #[test]
    fn constant_predictor_on_balanced_data() {
        let y: Vec<usize> = (0..150).map(|i| i % 15).collect();
        let m = compute_metrics(&y, &[4; 150], 15).unwrap();
        assert_eq!(m.micro_f, 1.0 / 15.0);
        assert!(m.classes.iter().enumerate().all(|(c, x)| x.undefined == (c != 4)));
    }

    #[test]
    fn absent_class_scores_zero_and_is_flagged() {
        let m = compute_metrics(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(m.classes[2].f, 0.0);
        assert!(m.classes[2].undefined);
        assert!((m.macro_f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_a_usage_error() {
        assert!(matches!(compute_metrics(&[0], &[0, 1], 2), Err(Error::Usage(_))));
    }
}
