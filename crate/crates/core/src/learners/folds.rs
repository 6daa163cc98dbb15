use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numkit::rng_stream;

/// `k` disjoint test folds covering every row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// (train, test) row indices for fold `i`, both ascending.
    pub fn split(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let test = self.folds[i].clone();
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        (train, test)
    }
}

/// Shuffles each class separately, then deals all classes round-robin with
/// one running counter, so every fold's per-class count is within one of
/// proportional and fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[f64], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-fold needs k ≥ 2, got {k}")));
    }
    let mut classes: Vec<f64> = labels.to_vec();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    let mut rng = rng_stream(seed, 0);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0usize;
    for c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} members, fewer than the {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}
