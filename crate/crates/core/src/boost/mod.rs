//! Multiclass Adaboost over decision stumps on flattened images.

pub mod oracle;
mod stump;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use stump::{best_stump, split_gini, train_stump, FeatureBins, Stump, ThresholdSearch, GINI_TIE, MAX_BINS};

use crate::{Error, Result};

/// Leaf probabilities are clamped here before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;
/// Sample weights never drop below this after renormalization.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostAlgorithm {
    #[default]
    SammeR,
    Samme,
}

impl BoostAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            BoostAlgorithm::SammeR => "samme_r",
            BoostAlgorithm::Samme => "samme",
        }
    }
}

impl std::str::FromStr for BoostAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "samme_r" => Ok(BoostAlgorithm::SammeR),
            "samme" => Ok(BoostAlgorithm::Samme),
            _ => Err(Error::Param(format!("unknown boosting algorithm `{s}` (samme_r, samme)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub algorithm: BoostAlgorithm,
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub search: ThresholdSearch,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig { algorithm: BoostAlgorithm::SammeR, n_estimators: 50, learning_rate: 1.0, search: ThresholdSearch::Histogram }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Config("n_estimators must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// SAMME stump coefficient for weighted error `err` among `k` classes.
pub fn samme_alpha(err: f64, k: usize, learning_rate: f64) -> f64 {
    learning_rate * (((1.0 - err) / err).ln() + ((k - 1) as f64).ln())
}

/// SAMME.R contribution `(K-1) (log p_k - mean_k' log p_k')` of one leaf.
pub fn samme_r_contribution(leaf: &[f64]) -> Vec<f64> {
    let k = leaf.len() as f64;
    let logs: Vec<f64> = leaf.iter().map(|&p| p.max(PROB_CLAMP).ln()).collect();
    let mean = logs.iter().sum::<f64>() / k;
    logs.iter().map(|&l| (k - 1.0) * (l - mean)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub algorithm: BoostAlgorithm,
    pub n_classes: usize,
    pub n_features: usize,
    pub learning_rate: f64,
    /// Stumps with their coefficients (1 for every SAMME.R stump).
    pub stumps: Vec<(Stump, f64)>,
}

/// Per-round record of a boosting run.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    /// Weighted misclassification rate of the round's stump.
    pub error: f64,
    pub accepted: bool,
    /// Smallest sample weight after the round's renormalization.
    pub min_weight: f64,
    pub weight_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostFit {
    pub ensemble: Ensemble,
    pub rounds: Vec<Round>,
}

/// Boosts stumps on row-major `x` (`y.len()` rows of `n_features`).
/// `n_classes` is the K of the update rules; at least two classes must
/// occur in `y`.
pub fn train_adaboost(x: &[f32], n_features: usize, y: &[usize], n_classes: usize, config: &BoostConfig) -> Result<BoostFit> {
    config.validate()?;
    let bins = FeatureBins::new(x, n_features, config.search)?;
    if bins.n_samples != y.len() {
        return Err(Error::shape("stump", format!("{} rows but {} labels", bins.n_samples, y.len())));
    }
    if let Some(&l) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Param(format!("label {l} outside 0..{n_classes}")));
    }
    let mut seen = vec![false; n_classes];
    y.iter().for_each(|&l| seen[l] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::Config("boosting needs at least two classes in the training labels".into()));
    }

    let n = y.len();
    let k = n_classes;
    let lr = config.learning_rate;
    let mut w = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    let mut rounds = Vec::new();
    for m in 0..config.n_estimators {
        let stump = best_stump(&bins, y, k, &w)?;
        let row = |i: usize| &x[i * n_features..(i + 1) * n_features];
        let wrong: Vec<bool> = (0..n).map(|i| stump.predict_one(row(i)) != y[i]).collect();
        let err: f64 = w.iter().zip(&wrong).filter(|(_, &b)| b).map(|(w, _)| w).sum::<f64>() / w.iter().sum::<f64>();
        let last = m + 1 == config.n_estimators;

        if err <= 0.0 {
            stumps.push((stump, 1.0));
            rounds.push(Round { error: 0.0, accepted: true, min_weight: min(&w), weight_sum: w.iter().sum() });
            break;
        }
        match config.algorithm {
            BoostAlgorithm::Samme => {
                if err >= 1.0 - 1.0 / k as f64 {
                    if stumps.is_empty() {
                        return Err(Error::Config(format!(
                            "the first stump is no better than chance (weighted error {err:.4})"
                        )));
                    }
                    rounds.push(Round { error: err, accepted: false, min_weight: min(&w), weight_sum: w.iter().sum() });
                    break;
                }
                let alpha = samme_alpha(err, k, lr);
                if !last {
                    for (wi, &bad) in w.iter_mut().zip(&wrong) {
                        if bad {
                            *wi *= alpha.exp();
                        }
                    }
                }
                stumps.push((stump, alpha));
            }
            BoostAlgorithm::SammeR => {
                if !last {
                    let scale = -lr * (k as f64 - 1.0) / k as f64;
                    for (i, wi) in w.iter_mut().enumerate() {
                        let leaf = stump.leaf(row(i));
                        // sum_k y_code_k log p_k with codes 1 and -1/(K-1)
                        let mut s = 0.0;
                        for (c, &p) in leaf.iter().enumerate() {
                            let lp = p.max(PROB_CLAMP).ln();
                            s += if c == y[i] { lp } else { -lp / (k as f64 - 1.0) };
                        }
                        *wi *= (scale * s).exp();
                    }
                }
                stumps.push((stump, 1.0));
            }
        }
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Param(format!("sample weights degenerated in round {}", m + 1)));
        }
        w.iter_mut().for_each(|v| *v = (*v / sum).max(WEIGHT_FLOOR));
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        rounds.push(Round { error: err, accepted: true, min_weight: min(&w), weight_sum: w.iter().sum() });
    }
    Ok(BoostFit {
        ensemble: Ensemble { algorithm: config.algorithm, n_classes: k, n_features, learning_rate: lr, stumps },
        rounds,
    })
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

impl Ensemble {
    fn check_rows(&self, x: &[f32]) -> Result<usize> {
        if x.len() % self.n_features != 0 {
            return Err(Error::shape(
                "ensemble",
                format!("{} values do not form rows of {} features", x.len(), self.n_features),
            ));
        }
        Ok(x.len() / self.n_features)
    }

    /// Summed stump contributions, `n x n_classes`.
    pub fn decision_scores(&self, x: &[f32]) -> Result<Vec<f64>> {
        let n = self.check_rows(x)?;
        let k = self.n_classes;
        let mut out = vec![0.0; n * k];
        for (i, scores) in out.chunks_mut(k).enumerate() {
            let row = &x[i * self.n_features..(i + 1) * self.n_features];
            for (stump, alpha) in &self.stumps {
                match self.algorithm {
                    BoostAlgorithm::Samme => scores[stump.predict_one(row)] += alpha,
                    BoostAlgorithm::SammeR => {
                        for (s, h) in scores.iter_mut().zip(samme_r_contribution(stump.leaf(row))) {
                            *s += h;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Highest-scoring class per row, lowest index on ties.
    pub fn predict(&self, x: &[f32]) -> Result<Vec<usize>> {
        let k = self.n_classes;
        Ok(self
            .decision_scores(x)?
            .chunks(k)
            .map(|s| {
                let mut best = 0;
                for c in 1..k {
                    if s[c] > s[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    /// Text checkpoint: a header, then one stump per line as
    /// `feature threshold left[K] right[K] alpha`.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# appprint adaboost ensemble")?;
        writeln!(w, "algorithm {}", self.algorithm.name())?;
        writeln!(w, "classes {}", self.n_classes)?;
        writeln!(w, "features {}", self.n_features)?;
        writeln!(w, "learning_rate {}", self.learning_rate)?;
        for (s, alpha) in &self.stumps {
            let mut line = format!("{} {}", s.feature, s.threshold);
            for p in s.left.iter().chain(&s.right) {
                line.push_str(&format!(" {p}"));
            }
            writeln!(w, "{line} {alpha}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut header = std::collections::BTreeMap::new();
        let mut stumps = Vec::new();
        let mut k = None;
        for (no, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Parse { line: no + 1, msg: msg.into() };
            let first = line.split_whitespace().next().unwrap_or_default();
            if first.parse::<usize>().is_err() {
                let (key, value) = line.split_once(' ').ok_or_else(|| bad("expected `key value`"))?;
                header.insert(key.to_string(), value.trim().to_string());
                if key == "classes" {
                    k = Some(value.trim().parse::<usize>().map_err(|_| bad("bad class count"))?);
                }
                continue;
            }
            let k = k.ok_or_else(|| bad("stump before the class count"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 + 2 * k {
                return Err(bad(&format!("expected {} fields, found {}", 3 + 2 * k, fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
            let feature = fields[0].parse().map_err(|_| bad("bad feature index"))?;
            let threshold = num(fields[1])?;
            let left = fields[2..2 + k].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let right = fields[2 + k..2 + 2 * k].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let alpha = num(fields[2 + 2 * k])?;
            stumps.push((Stump { feature, threshold, left, right }, alpha));
        }
        let get = |key: &str| header.get(key).ok_or_else(|| Error::Format(format!("missing `{key}` header")));
        let n_features: usize = get("features")?.parse().map_err(|_| Error::Format("bad feature count".into()))?;
        let ensemble = Ensemble {
            algorithm: get("algorithm")?.parse()?,
            n_classes: k.ok_or_else(|| Error::Format("missing `classes` header".into()))?,
            n_features,
            learning_rate: get("learning_rate")?.parse().map_err(|_| Error::Format("bad learning rate".into()))?,
            stumps,
        };
        if let Some((s, _)) = ensemble.stumps.iter().find(|(s, _)| s.feature >= n_features) {
            return Err(Error::Format(format!("stump feature {} outside 0..{n_features}", s.feature)));
        }
        Ok(ensemble)
    }
}
