//! Cross-validated experiments over image pools: variants, folds,
//! metrics, the encoding x variant x classifier grid, and reports.

mod folds;
mod metrics;
mod pool;
mod report;

use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use folds::{group_kfold, kfold_split, stratified_kfold, FoldPlan, SplitMode};
pub use metrics::{compute_metrics, ClassMetrics, MetricsReport};
pub use pool::{
    augment_pool, base_paths, build_pool, load_base, pool_paths, render_base, save_base, ImagePool, PoolEntry,
};
pub use report::{degradation_csv, reports_csv, reports_svg, write_outputs, Degradation, RunManifest};

use crate::applog::Scope;
use crate::boost::{train_adaboost, BoostConfig};
use crate::nnet::{build_model, predict, train, Precision, Real, TrainConfig, TrainHistory};
use crate::{rng, Error, Result};

/// Share of base user-days the DROPOUT variant removes.
pub const DROPOUT_FRACTION: f64 = 0.20;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "ALL", alias = "all")]
    All,
    #[serde(rename = "F1-F7", alias = "f1-f7")]
    F1F7,
    #[serde(rename = "F8-F15", alias = "f8-f15")]
    F8F15,
    #[serde(rename = "DROPOUT", alias = "dropout")]
    Dropout,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::All, Variant::F1F7, Variant::F8F15, Variant::Dropout];

    pub fn name(self) -> &'static str {
        match self {
            Variant::All => "ALL",
            Variant::F1F7 => "F1-F7",
            Variant::F8F15 => "F8-F15",
            Variant::Dropout => "DROPOUT",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Param(format!("unknown variant `{s}` (all, f1-f7, f8-f15, dropout)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classifier {
    #[serde(rename = "CNN", alias = "cnn")]
    Cnn,
    #[serde(rename = "ADABOOST", alias = "adaboost")]
    Adaboost,
}

impl Classifier {
    pub const ALL: [Classifier; 2] = [Classifier::Cnn, Classifier::Adaboost];

    pub fn name(self) -> &'static str {
        match self {
            Classifier::Cnn => "CNN",
            Classifier::Adaboost => "ADABOOST",
        }
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Classifier::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Param(format!("unknown classifier `{s}` (cnn, adaboost)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantInfo {
    pub variant: Variant,
    pub n_images: usize,
    pub base_days: usize,
    pub removed_days: usize,
}

/// Selects the images of `variant`. DROPOUT removes
/// `round(0.2 * base days)` whole user-days, chosen by `seed`.
pub fn make_variant(pool: &ImagePool, variant: Variant, seed: u64) -> Result<(ImagePool, VariantInfo)> {
    let days = pool.base_days();
    let mut removed = 0;
    let keep: Vec<usize> = match variant {
        Variant::All => (0..pool.len()).collect(),
        Variant::F1F7 => (0..pool.len()).filter(|&i| (1..=7).contains(&pool.entries[i].filter_size)).collect(),
        Variant::F8F15 => (0..pool.len()).filter(|&i| (8..=15).contains(&pool.entries[i].filter_size)).collect(),
        Variant::Dropout => {
            let mut order = days.clone();
            order.shuffle(&mut rng::stream(seed, 0));
            removed = (DROPOUT_FRACTION * days.len() as f64).round() as usize;
            let gone: std::collections::BTreeSet<_> = order[..removed].iter().copied().collect();
            (0..pool.len()).filter(|&i| !gone.contains(&(pool.entries[i].label, pool.entries[i].day))).collect()
        }
    };
    if keep.is_empty() {
        return Err(Error::Config(format!("variant {variant} leaves no images")));
    }
    let subset = pool.subset(&keep);
    let info = VariantInfo { variant, n_images: subset.len(), base_days: days.len(), removed_days: removed };
    Ok((subset, info))
}

/// Split of `pool` into `k` folds under `mode`.
pub fn plan_folds(pool: &ImagePool, mode: SplitMode, k: usize, seed: u64) -> Result<FoldPlan> {
    match mode {
        SplitMode::Shuffled => kfold_split(pool.len(), k, seed),
        SplitMode::Stratified => stratified_kfold(&pool.labels(), k, seed),
        SplitMode::GroupByDay => group_kfold(&pool.day_groups(), k, seed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub shuffle: u64,
    pub dropout: u64,
    pub model: u64,
}

impl Seeds {
    /// Distinct per-purpose seeds derived from one master seed.
    pub fn from_master(seed: u64) -> Self {
        Seeds { shuffle: rng::mix(seed, 1), dropout: rng::mix(seed, 2), model: rng::mix(seed, 3) }
    }
}

/// Settings shared by every cell of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSettings {
    pub seeds: Seeds,
    pub folds: usize,
    pub split: SplitMode,
    pub precision: Precision,
    /// The per-fold `seed` field is ignored; it is derived from `seeds.model`.
    pub train: TrainConfig,
    pub boost: BoostConfig,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            seeds: Seeds::from_master(0),
            folds: DEFAULT_FOLDS,
            split: SplitMode::Shuffled,
            precision: Precision::Fast32,
            train: TrainConfig::default(),
            boost: BoostConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub encoding: Scope,
    pub variant: Variant,
    pub classifier: Classifier,
    #[serde(flatten)]
    pub settings: ExperimentSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    /// 1-based.
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: MetricsReport,
    pub history: Option<TrainHistory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub encoding: Scope,
    pub variant: Variant,
    pub classifier: Classifier,
    pub info: VariantInfo,
    pub folds: Vec<FoldReport>,
    /// Metrics over the concatenated held-out predictions of all folds.
    pub pooled: MetricsReport,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn mean_macro_f(&self) -> f64 {
        self.folds.iter().map(|f| f.metrics.macro_f).sum::<f64>() / self.folds.len() as f64
    }

    pub fn mean_micro_f(&self) -> f64 {
        self.folds.iter().map(|f| f.metrics.micro_f).sum::<f64>() / self.folds.len() as f64
    }
}

fn fit_predict_cnn<T: Real>(
    train_x: &[f32],
    train_y: &[usize],
    test_x: &[f32],
    n_classes: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<(Vec<usize>, TrainHistory)> {
    let mut model = build_model::<T>(n_classes, seed)?;
    let cfg = TrainConfig { seed: rng::mix(seed, 1), ..config.clone() };
    let history = train(&mut model, train_x, train_y, &cfg)?;
    Ok((predict(&model, test_x, cfg.batch_size)?, history))
}

/// Trains and tests one classifier on every fold of one variant.
pub fn run_experiment(config: &ExperimentConfig, pool: &ImagePool) -> Result<ExperimentReport> {
    if pool.encoding != config.encoding {
        return Err(Error::Config(format!(
            "pool holds {} images but the experiment asks for {}",
            pool.encoding, config.encoding
        )));
    }
    let s = &config.settings;
    let (data, info) = make_variant(pool, config.variant, s.seeds.dropout)?;
    let plan = plan_folds(&data, s.split, s.folds, s.seeds.shuffle)?;
    let k = data.n_classes();
    let labels = data.labels();
    let mut folds = Vec::with_capacity(plan.k);
    let (mut all_true, mut all_pred) = (Vec::new(), Vec::new());
    for f in 0..plan.k {
        let (train_idx, test_idx) = plan.train_test(f);
        let train_x = data.gather(&train_idx);
        let train_y: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
        let test_x = data.gather(&test_idx);
        let test_y: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
        let fold_seed = rng::mix(s.seeds.model, f as u64);
        let (pred, history) = match config.classifier {
            Classifier::Cnn => {
                let (p, h) = match s.precision {
                    Precision::Fast32 => fit_predict_cnn::<f32>(&train_x, &train_y, &test_x, k, fold_seed, &s.train)?,
                    Precision::Check64 => fit_predict_cnn::<f64>(&train_x, &train_y, &test_x, k, fold_seed, &s.train)?,
                };
                (p, Some(h))
            }
            Classifier::Adaboost => {
                let fit = train_adaboost(&train_x, data.image_len(), &train_y, k, &s.boost)?;
                (fit.ensemble.predict(&test_x)?, None)
            }
        };
        let metrics = compute_metrics(&test_y, &pred, k)?;
        all_true.extend(test_y);
        all_pred.extend(pred);
        folds.push(FoldReport { fold: f + 1, n_train: train_idx.len(), n_test: test_idx.len(), metrics, history });
    }
    let mut notes = Vec::new();
    if config.variant == Variant::Dropout {
        notes.push(format!(
            "DROPOUT removed {} of {} base user-days before fold splitting",
            info.removed_days, info.base_days
        ));
    }
    Ok(ExperimentReport {
        encoding: config.encoding,
        variant: config.variant,
        classifier: config.classifier,
        info,
        folds,
        pooled: compute_metrics(&all_true, &all_pred, k)?,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub encodings: Vec<Scope>,
    pub variants: Vec<Variant>,
    pub classifiers: Vec<Classifier>,
    /// Cells run concurrently, at most this many at once.
    pub workers: usize,
    #[serde(flatten)]
    pub settings: ExperimentSettings,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            encodings: Scope::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            classifiers: Classifier::ALL.to_vec(),
            workers: 1,
            settings: ExperimentSettings::default(),
        }
    }
}

impl GridConfig {
    /// Cells in report order: encoding, then variant, then classifier.
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &encoding in &self.encodings {
            for &variant in &self.variants {
                for &classifier in &self.classifiers {
                    out.push(ExperimentConfig { encoding, variant, classifier, settings: self.settings.clone() });
                }
            }
        }
        out
    }
}

/// Runs every cell. `pools` must hold one pool per requested encoding.
/// Output order is [`GridConfig::cells`] regardless of `workers`.
pub fn run_grid(pools: &[ImagePool], config: &GridConfig) -> Result<Vec<ExperimentReport>> {
    let cells = config.cells();
    if cells.is_empty() {
        return Err(Error::Config("the grid has no cells".into()));
    }
    let find = |enc: Scope| {
        pools
            .iter()
            .find(|p| p.encoding == enc)
            .ok_or_else(|| Error::Config(format!("no {enc} image pool; run `appprint render` and `appprint augment` first")))
    };
    for c in &cells {
        find(c.encoding)?;
    }
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start workers: {e}")))?;
    workers.install(|| cells.par_iter().map(|c| run_experiment(c, find(c.encoding)?)).collect())
}

/// Per encoding and classifier: drop in mean macro-F from the best
/// non-DROPOUT variant to DROPOUT.
pub fn degradations(reports: &[ExperimentReport]) -> Vec<Degradation> {
    let mut out = Vec::new();
    let mut keys: Vec<(Scope, Classifier)> = reports.iter().map(|r| (r.encoding, r.classifier)).collect();
    keys.sort();
    keys.dedup();
    for (encoding, classifier) in keys {
        let cell = |v: Variant| reports.iter().find(|r| r.encoding == encoding && r.classifier == classifier && r.variant == v);
        let Some(dropout) = cell(Variant::Dropout) else { continue };
        let mut best: Option<&ExperimentReport> = None;
        for v in [Variant::All, Variant::F1F7, Variant::F8F15] {
            if let Some(r) = cell(v) {
                if best.is_none_or(|b| r.mean_macro_f() > b.mean_macro_f()) {
                    best = Some(r);
                }
            }
        }
        let Some(best) = best else { continue };
        let (bf, df) = (best.mean_macro_f(), dropout.mean_macro_f());
        out.push(Degradation {
            encoding,
            classifier,
            best_variant: best.variant,
            best_macro_f: bf,
            dropout_macro_f: df,
            delta: bf - df,
            relative: if bf > 0.0 { (bf - df) / bf } else { 0.0 },
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn pool(users: usize, days: usize, filters: &[u8]) -> ImagePool {
        let mut entries = Vec::new();
        for u in 0..users {
            for d in 0..days {
                for &k in filters {
                    entries.push(PoolEntry {
                        user_id: format!("u{u}"),
                        label: u,
                        day: NaiveDate::from_ymd_opt(2012, 1, 2 + d as u32).unwrap(),
                        filter_size: k,
                    });
                }
            }
        }
        let n = entries.len();
        ImagePool {
            encoding: Scope::PerDay,
            users: (0..users).map(|u| format!("u{u}")).collect(),
            side: 2,
            entries,
            pixels: vec![0.0; n * 4],
        }
    }

    #[test]
    fn filter_variants() {
        let all: Vec<u8> = (1..=15).collect();
        let p = pool(1, 1, &all);
        assert_eq!(make_variant(&p, Variant::F1F7, 0).unwrap().0.len(), 7);
        assert_eq!(make_variant(&p, Variant::F8F15, 0).unwrap().0.len(), 8);
        assert_eq!(make_variant(&p, Variant::All, 0).unwrap().0.len(), 15);
    }

    #[test]
    fn dropout_removes_whole_days() {
        let p = pool(4, 25, &[1, 2, 3]);
        let (sub, info) = make_variant(&p, Variant::Dropout, 5).unwrap();
        assert_eq!((info.base_days, info.removed_days), (100, 20));
        assert_eq!(sub.base_days().len(), 80);
        assert_eq!(sub.len(), 240);
    }

    #[test]
    fn empty_variant_is_a_config_error() {
        let p = pool(2, 2, &[9]);
        assert!(matches!(make_variant(&p, Variant::F1F7, 0), Err(Error::Config(_))));
    }

    #[test]
    fn names_parse_back() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(v.name().to_lowercase().parse::<Variant>().unwrap(), v);
        }
        for c in Classifier::ALL {
            assert_eq!(c.name().to_lowercase().parse::<Classifier>().unwrap(), c);
        }
    }

    #[test]
    fn grid_has_twenty_four_cells() {
        assert_eq!(GridConfig::default().cells().len(), 24);
    }
}
