use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Split sizes. `per_class_train` nodes of every class go to train, then
/// `test` and `val` nodes are taken from what is left.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub per_class_train: usize,
    pub val: usize,
    pub test: usize,
    /// Shuffle the node order with the supplied generator before applying
    /// the rule; otherwise file order is used and no randomness is consumed.
    pub shuffle: bool,
}

impl SplitSpec {
    /// 20 labeled nodes per class, 500 validation, 1000 test.
    pub fn planetoid() -> Self {
        Self {
            per_class_train: 20,
            val: 500,
            test: 1000,
            shuffle: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitMasks {
    pub fn all_test(n: usize) -> Self {
        Self {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn is_disjoint(&self) -> bool {
        self.train.len() == self.val.len()
            && self.val.len() == self.test.len()
            && (0..self.len())
                .all(|i| (self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8) <= 1)
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (count(&self.train), count(&self.val), count(&self.test))
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Assigns train/validation/test masks.
///
/// In node order (file order, or a seeded shuffle of it):
/// 1. train: the first `per_class_train` nodes of each class;
/// 2. test: the last `test` nodes not in train;
/// 3. val: the first `val` nodes in neither.
pub fn split_nodes(
    labels: &[usize],
    class_count: usize,
    spec: &SplitSpec,
    rng: &mut Rng,
) -> Result<SplitMasks> {
    let n = labels.len();
    let needed = spec.per_class_train * class_count + spec.val + spec.test;
    if needed > n {
        return Err(Error::Config(format!(
            "split needs {needed} nodes ({} per class x {class_count} + {} + {}) but the graph has {n}",
            spec.per_class_train, spec.val, spec.test
        )));
    }
    let order: Vec<usize> = if spec.shuffle {
        rng.permutation(n)
    } else {
        (0..n).collect()
    };

    let mut masks = SplitMasks {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    let mut taken = vec![0usize; class_count];
    for &i in &order {
        let c = labels[i];
        if c >= class_count {
            return Err(Error::InvalidArgument(format!(
                "label {c} out of range for {class_count} classes"
            )));
        }
        if taken[c] < spec.per_class_train {
            taken[c] += 1;
            masks.train[i] = true;
        }
    }
    if let Some(c) = taken.iter().position(|&t| t < spec.per_class_train) {
        return Err(Error::Split(format!(
            "class {c} has {} nodes, fewer than the {} required for training",
            taken[c], spec.per_class_train
        )));
    }
    for &i in order
        .iter()
        .rev()
        .filter(|&&i| !masks.train[i])
        .take(spec.test)
    {
        masks.test[i] = true;
    }
    for &i in order
        .iter()
        .filter(|&&i| !masks.train[i] && !masks.test[i])
        .take(spec.val)
    {
        masks.val[i] = true;
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_twelve_nodes() {
        // labels 0,1,2 repeating
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let spec = SplitSpec {
            per_class_train: 2,
            val: 3,
            test: 3,
            shuffle: false,
        };
        let m = split_nodes(&labels, 3, &spec, &mut Rng::new(0)).unwrap();
        assert!(m.is_disjoint());
        assert_eq!(m.sizes(), (6, 3, 3));
        // enumerated by hand: train = first two of each class = 0..6,
        // test = last three = 9,10,11, val = next three = 6,7,8
        assert_eq!(SplitMasks::indices(&m.train), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(SplitMasks::indices(&m.test), vec![9, 10, 11]);
        assert_eq!(SplitMasks::indices(&m.val), vec![6, 7, 8]);
    }

    #[test]
    fn degenerate_all_test() {
        let labels = vec![0, 1, 0, 1];
        let spec = SplitSpec {
            per_class_train: 0,
            val: 0,
            test: 4,
            shuffle: false,
        };
        let m = split_nodes(&labels, 2, &spec, &mut Rng::new(0)).unwrap();
        assert_eq!(m.sizes(), (0, 0, 4));
    }

    #[test]
    fn errors() {
        let labels = vec![0, 0, 0, 1];
        let spec = SplitSpec {
            per_class_train: 2,
            val: 0,
            test: 0,
            shuffle: false,
        };
        let e = split_nodes(&labels, 2, &spec, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(e, Error::Split(_)));
        assert!(e.to_string().contains("class 1"));
        let too_big = SplitSpec {
            per_class_train: 1,
            val: 2,
            test: 2,
            shuffle: false,
        };
        assert!(matches!(
            split_nodes(&labels, 2, &too_big, &mut Rng::new(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn shuffled_split_is_seeded() {
        let labels: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let spec = SplitSpec {
            per_class_train: 2,
            val: 10,
            test: 10,
            shuffle: true,
        };
        let a = split_nodes(&labels, 5, &spec, &mut Rng::new(9)).unwrap();
        let b = split_nodes(&labels, 5, &spec, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sizes(), (10, 10, 10));
        assert!(a.is_disjoint());
    }
}
