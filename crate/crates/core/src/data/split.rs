use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::SeededRng;

pub const N_FOLDS: usize = 5;

/// 20% held-out test rows plus five cross-validation folds over the rest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub test_indices: Vec<usize>,
    pub cv_folds: Vec<Vec<usize>>,
    pub seed: u64,
}

pub fn make_split(n: usize, seed: u64) -> Result<SplitPlan> {
    if n < 10 {
        return Err(Error::Split(format!("need at least 10 rows, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeededRng::new(seed).split("split"));

    let n_test = n / 5;
    let mut test_indices = order[..n_test].to_vec();
    test_indices.sort_unstable();

    let rest = &order[n_test..];
    let base = rest.len() / N_FOLDS;
    let extra = rest.len() % N_FOLDS;
    let mut cv_folds = Vec::with_capacity(N_FOLDS);
    let mut start = 0;
    for k in 0..N_FOLDS {
        let size = base + usize::from(k < extra);
        let mut fold = rest[start..start + size].to_vec();
        fold.sort_unstable();
        cv_folds.push(fold);
        start += size;
    }
    Ok(SplitPlan {
        test_indices,
        cv_folds,
        seed,
    })
}

impl SplitPlan {
    /// All cross-validation rows, ascending.
    pub fn cv_indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.cv_folds.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// `(train, validation)` for fold `k`.
    pub fn fold(&self, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let val = self
            .cv_folds
            .get(k)
            .ok_or_else(|| Error::Split(format!("fold {k} out of range")))?
            .clone();
        let mut train: Vec<usize> = self
            .cv_folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        Ok((train, val))
    }

    /// Checks the plan partitions `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self
            .test_indices
            .iter()
            .chain(self.cv_folds.iter().flatten())
        {
            if i >= n {
                return Err(Error::Split(format!("index {i} out of range for {n} rows")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Split(format!("index {i} assigned twice")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Split(format!("index {missing} not assigned")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_rows() {
        let p = make_split(10, 1).unwrap();
        assert_eq!(p.test_indices.len(), 2);
        let sizes: Vec<usize> = p.cv_folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 2, 1, 1]);
        p.validate(10).unwrap();
    }

    #[test]
    fn thousand_rows() {
        let p = make_split(1000, 9).unwrap();
        assert_eq!(p.test_indices.len(), 200);
        assert!(p.cv_folds.iter().all(|f| f.len() == 160));
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(make_split(57, 3).unwrap(), make_split(57, 3).unwrap());
        assert_ne!(make_split(57, 3).unwrap(), make_split(57, 4).unwrap());
    }

    #[test]
    fn too_small() {
        assert!(matches!(make_split(9, 0), Err(Error::Split(_))));
    }

    #[test]
    fn folds_partition_cv_rows() {
        let p = make_split(506, 2).unwrap();
        p.validate(506).unwrap();
        let (train, val) = p.fold(3).unwrap();
        assert_eq!(train.len() + val.len(), 506 - 101);
        assert!(val.iter().all(|v| !train.contains(v)));
        let sizes: Vec<usize> = p.cv_folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
