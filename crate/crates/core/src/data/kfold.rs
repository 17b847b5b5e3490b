use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One cross-validation fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// Training volumes whose labels are used.
    pub labeled: Vec<String>,
    /// Training volumes used without labels.
    pub unlabeled: Vec<String>,
    pub test: Vec<String>,
}

impl Fold {
    pub fn train(&self) -> impl Iterator<Item = &String> {
        self.labeled.iter().chain(&self.unlabeled)
    }
}

/// Shuffles `ids` with `seed` and deals them into `k` test folds.
///
/// In each training split `max(1, round(labeled_fraction·|train|))` volumes
/// are flagged labeled.
pub fn kfold_split(ids: &[String], k: usize, seed: u64, labeled_fraction: f64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > ids.len() {
        return Err(Error::invalid(format!("k = {k} exceeds the {} ids", ids.len())));
    }
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(Error::invalid(format!("labeled_fraction {labeled_fraction} outside (0, 1]")));
    }
    let mut order: Vec<String> = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut tests = vec![Vec::new(); k];
    for (i, id) in order.iter().enumerate() {
        tests[i % k].push(id.clone());
    }
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(f, test)| {
            let train: Vec<String> = order.iter().enumerate().filter(|(i, _)| i % k != f).map(|(_, id)| id.clone()).collect();
            let n_lab = ((labeled_fraction * train.len() as f64).round() as usize).clamp(1, train.len());
            let (labeled, unlabeled) = train.split_at(n_lab);
            Fold {
                labeled: labeled.to_vec(),
                unlabeled: unlabeled.to_vec(),
                test,
            }
        })
        .collect())
}
