use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub seed: u64,
    pub index: usize,
    /// Training trip ids, sorted.
    pub train: Vec<String>,
    /// Test trip ids, sorted.
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seeds: Vec<u64>,
    pub n_folds: usize,
    pub folds: Vec<Fold>,
}

/// Per seed: sort the ids, shuffle them with the seed, and cut the result
/// into `n_folds` contiguous chunks. Chunk sizes differ by at most one, with
/// the larger chunks first.
pub fn make_splits(ids: &[String], seeds: &[u64], n_folds: usize) -> Result<SplitPlan> {
    if n_folds < 2 {
        return Err(Error::input("at least two folds are required"));
    }
    let sorted: BTreeSet<&String> = ids.iter().collect();
    if sorted.len() != ids.len() {
        return Err(Error::input("duplicate trip ids"));
    }
    if ids.len() < n_folds {
        return Err(Error::input(format!("{} trips cannot fill {n_folds} folds", ids.len())));
    }
    let base: Vec<&String> = sorted.into_iter().collect();
    let (q, r) = (base.len() / n_folds, base.len() % n_folds);
    let mut folds = Vec::with_capacity(seeds.len() * n_folds);
    for &seed in seeds {
        let mut order = base.clone();
        order.shuffle(&mut stream(seed, "split", 0));
        let mut start = 0;
        for index in 0..n_folds {
            let size = q + usize::from(index < r);
            let chunk: BTreeSet<&String> = order[start..start + size].iter().copied().collect();
            start += size;
            let test = chunk.iter().map(|s| (*s).clone()).collect();
            let train = base.iter().filter(|s| !chunk.contains(*s)).map(|s| (*s).clone()).collect();
            folds.push(Fold { seed, index, train, test });
        }
    }
    Ok(SplitPlan { seeds: seeds.to_vec(), n_folds, folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("trip-{i:03}")).collect()
    }

    #[test]
    fn even_partition() {
        let p = make_splits(&ids(10), &[42], 5).unwrap();
        assert!(p.folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 8));
    }

    #[test]
    fn remainder_goes_first() {
        let p = make_splits(&ids(11), &[42], 5).unwrap();
        let sizes: Vec<usize> = p.folds.iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = make_splits(&ids(40), &[42, 123], 5).unwrap();
        assert_eq!(a, make_splits(&ids(40), &[42, 123], 5).unwrap());
        assert_ne!(a.folds[0].test, a.folds[5].test);
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut rev = ids(23);
        rev.reverse();
        assert_eq!(make_splits(&rev, &[7], 5).unwrap(), make_splits(&ids(23), &[7], 5).unwrap());
    }

    #[test]
    fn partition_invariants() {
        let all = ids(37);
        let p = make_splits(&all, &[42, 123, 999], 5).unwrap();
        assert_eq!(p.folds.len(), 15);
        for seed in [42, 123, 999] {
            let mut seen = BTreeSet::new();
            for f in p.folds.iter().filter(|f| f.seed == seed) {
                let test: BTreeSet<_> = f.test.iter().collect();
                let train: BTreeSet<_> = f.train.iter().collect();
                assert!(test.is_disjoint(&train));
                assert_eq!(test.len() + train.len(), all.len());
                for t in &f.test {
                    assert!(seen.insert(t.clone()));
                }
            }
            assert_eq!(seen.len(), all.len());
        }
    }

    #[test]
    fn too_few_trips() {
        assert!(make_splits(&ids(4), &[1], 5).is_err());
        assert!(make_splits(&["a".into(), "a".into()], &[1], 2).is_err());
    }
}
