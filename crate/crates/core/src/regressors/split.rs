use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MIN_SPLIT_ROWS: usize = 10;

/// Uniformly random partition: ⌊ratio·n⌋ items for fitting, the rest held
/// out. Both parts keep the input order.
pub fn train_test_split<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = items.len();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::Insufficient(format!("cannot split {n} rows (need {MIN_SPLIT_ROWS})")));
    }
    let n_train = (ratio * n as f64 + 1e-9).floor() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &idx[..n_train] {
        in_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (item, t) in items.iter().zip(in_train) {
        if t {
            train.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes_floor() {
        let items: Vec<u32> = (0..1000).collect();
        let (a, b) = train_test_split(&items, 0.7, 1).unwrap();
        assert_eq!((a.len(), b.len()), (700, 300));
        let (a, _) = train_test_split(&items[..15], 0.7, 1).unwrap();
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn seed_determinism() {
        let items: Vec<u32> = (0..1000).collect();
        assert_eq!(train_test_split(&items, 0.7, 42).unwrap(), train_test_split(&items, 0.7, 42).unwrap());
        assert_ne!(train_test_split(&items, 0.7, 42).unwrap().0, train_test_split(&items, 0.7, 43).unwrap().0);
    }

    #[test]
    fn errors() {
        let items: Vec<u32> = (0..9).collect();
        assert!(train_test_split(&items, 0.7, 0).is_err());
        let items: Vec<u32> = (0..20).collect();
        assert!(train_test_split(&items, 1.0, 0).is_err());
        assert!(train_test_split(&items, 0.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_cover(n in 10usize..500, ratio in 0.05f64..0.95, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let (a, b) = train_test_split(&items, ratio, seed).unwrap();
            prop_assert_eq!(a.len(), (ratio * n as f64 + 1e-9).floor() as usize);
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, items);
        }
    }
}
