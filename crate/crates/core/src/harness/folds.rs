use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Shuffle every image, then cut into contiguous folds.
    #[default]
    Shuffled,
    /// Each class dealt evenly across folds.
    Stratified,
    /// All images of one user-day stay in one fold.
    GroupByDay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Test indices of each fold, ascending.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    /// `(train, test)` for fold `f`, both ascending.
    pub fn train_test(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train: Vec<usize> =
            self.folds.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, v)| v.iter().copied()).collect();
        train.sort_unstable();
        (train, self.folds[f].clone())
    }
}

fn check_k(n: usize, k: usize, what: &str) -> Result<()> {
    if k < 2 {
        return Err(Error::Config("need at least two folds".into()));
    }
    if n < k {
        return Err(Error::Config(format!("cannot split {n} {what} into {k} folds")));
    }
    Ok(())
}

fn finish(k: usize, seed: u64, mut folds: Vec<Vec<usize>>) -> FoldPlan {
    folds.iter_mut().for_each(|f| f.sort_unstable());
    FoldPlan { k, seed, folds }
}

/// Seeded shuffle of `0..n`, then contiguous folds; the first `n % k`
/// folds hold one extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    check_k(n, k, "samples")?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(finish(k, seed, folds))
}

/// Shuffles within each class, then deals the concatenation (classes in
/// label order) round-robin.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    check_k(labels.len(), k, "samples")?;
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut r = rng::stream(seed, 0);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut r);
        for i in members {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    Ok(finish(k, seed, folds))
}

/// Shuffles the distinct groups and deals whole groups round-robin.
pub fn group_kfold(groups: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    check_k(ids.len(), k, "groups")?;
    ids.shuffle(&mut rng::stream(seed, 0));
    let fold_of: std::collections::BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &g)| (g, i % k)).collect();
    let mut folds = vec![Vec::new(); k];
    for (i, g) in groups.iter().enumerate() {
        folds[fold_of[g]].push(i);
    }
    Ok(finish(k, seed, folds))
}
