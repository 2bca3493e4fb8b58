use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, DatasetError, Provenance};

/// Seeded uniform split into (DS_A, DS_T) with `|DS_A| = n_a`. Both halves keep
/// the input's record order and ids.
pub fn split(d: &Dataset, n_a: usize, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
    if n_a == 0 || n_a >= d.len() {
        return Err(DatasetError::SplitRange { n_a, len: d.len() });
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, t) = order.split_at_mut(n_a);
    a.sort_unstable();
    t.sort_unstable();
    Ok((
        d.select(a, Provenance::AdversarySet),
        d.select(t, Provenance::TargetSet),
    ))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::super::testing::{toy_record, toy_schema};
    use super::*;

    fn toy(n: usize) -> Dataset {
        let records = (0..n)
            .map(|i| {
                toy_record(
                    i,
                    (i % 3) as u32,
                    i as f64 % 10.0,
                    (i % 2) as u32,
                    (i % 2) as u32,
                )
            })
            .collect();
        Dataset::new(toy_schema(), records, Provenance::Preprocessed)
    }

    #[test]
    fn sizes() {
        let (a, t) = split(&toy(20), 5, 1).unwrap();
        assert_eq!((a.len(), t.len()), (5, 15));
        assert_eq!(a.provenance(), Provenance::AdversarySet);
        assert_eq!(t.provenance(), Provenance::TargetSet);
    }

    #[test]
    fn deterministic_for_seed() {
        let d = toy(50);
        let (a1, _) = split(&d, 10, 42).unwrap();
        let (a2, _) = split(&d, 10, 42).unwrap();
        let (a3, _) = split(&d, 10, 43).unwrap();
        assert_eq!(a1.ids(), a2.ids());
        assert_ne!(a1.ids(), a3.ids());
    }

    #[test]
    fn out_of_range() {
        let d = toy(5);
        assert!(matches!(
            split(&d, 0, 1),
            Err(DatasetError::SplitRange { .. })
        ));
        assert!(matches!(
            split(&d, 5, 1),
            Err(DatasetError::SplitRange { .. })
        ));
    }

    proptest! {
        #[test]
        fn disjoint_and_exhaustive(n in 2usize..200, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let n_a = ((n as f64 * frac) as usize).clamp(1, n - 1);
            let d = toy(n);
            let (a, t) = split(&d, n_a, seed).unwrap();
            let ia: HashSet<usize> = a.ids().into_iter().collect();
            let it: HashSet<usize> = t.ids().into_iter().collect();
            prop_assert!(ia.is_disjoint(&it));
            prop_assert_eq!(ia.len() + it.len(), n);
            prop_assert_eq!(a.len(), n_a);
        }
    }
}
