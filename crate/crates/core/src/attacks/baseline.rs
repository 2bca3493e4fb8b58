use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_priors, first_max, AttackError, AttackPrediction, TargetRecord};
use crate::dataset::Schema;

/// `argmax_i p_1,i`, ties to the first value in domain order.
pub fn naive_choice(priors: &[f64]) -> usize {
    first_max(priors.iter().copied().enumerate()).unwrap_or(0)
}

/// Predicts the most probable sensitive value for every record. No queries.
pub fn naive_attack(
    records: &[TargetRecord],
    priors: &[f64],
) -> Result<Vec<AttackPrediction>, AttackError> {
    check_priors(priors, priors.len().max(2))?;
    let choice = naive_choice(priors);
    Ok(records
        .iter()
        .map(|r| AttackPrediction {
            record_id: r.id,
            predicted: choice,
            case: None,
            queries: 0,
            aux: priors.to_vec(),
        })
        .collect())
}

/// Predicts the positive sensitive value with probability `p_positive`,
/// independently per record, from a seeded stream. No queries.
pub fn random_guessing_attack(
    records: &[TargetRecord],
    schema: &Schema,
    p_positive: f64,
    seed: u64,
) -> Result<Vec<AttackPrediction>, AttackError> {
    let k = schema.k();
    if k != 2 {
        return Err(AttackError::NonBinarySensitive(k));
    }
    if !(0.0..=1.0).contains(&p_positive) {
        return Err(AttackError::Probability(p_positive));
    }
    let positive = schema
        .sensitive()
        .positive_index()
        .ok_or(AttackError::NoPositiveClass)?;
    let negative = 1 - positive;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(records
        .iter()
        .map(|r| {
            let draw: f64 = rng.gen();
            AttackPrediction {
                record_id: r.id,
                predicted: if draw < p_positive {
                    positive
                } else {
                    negative
                },
                case: None,
                queries: 0,
                aux: vec![draw],
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::testing::{record, schema};
    use super::*;

    fn records(n: usize) -> Vec<TargetRecord> {
        (0..n).map(|i| record(i, 0, 0, 0)).collect()
    }

    #[test]
    fn naive_predicts_majority() {
        let out = naive_attack(&records(5), &[0.802, 0.198]).unwrap();
        assert!(out
            .iter()
            .all(|p| p.predicted == 0 && p.queries == 0 && p.case.is_none()));
    }

    #[test]
    fn naive_tie_goes_to_domain_order() {
        assert_eq!(naive_choice(&[0.5, 0.5]), 0);
        assert_eq!(naive_choice(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn naive_rejects_bad_priors() {
        assert!(naive_attack(&records(1), &[0.9, 0.2]).is_err());
    }

    #[test]
    fn random_endpoints() {
        let s = schema();
        let all = random_guessing_attack(&records(100), &s, 1.0, 3).unwrap();
        assert!(all.iter().all(|p| p.predicted == 1));
        let none = random_guessing_attack(&records(100), &s, 0.0, 3).unwrap();
        let naive = naive_attack(&records(100), &[0.7, 0.3]).unwrap();
        assert!(none
            .iter()
            .zip(&naive)
            .all(|(a, b)| a.predicted == b.predicted));
    }

    #[test]
    fn random_is_seeded() {
        let s = schema();
        let a = random_guessing_attack(&records(500), &s, 0.5, 11).unwrap();
        let b = random_guessing_attack(&records(500), &s, 0.5, 11).unwrap();
        assert_eq!(a, b);
        let positives = a.iter().filter(|p| p.predicted == 1).count();
        assert!((200..300).contains(&positives), "{positives}");
    }

    #[test]
    fn random_rejects_bad_probability() {
        assert!(matches!(
            random_guessing_attack(&records(1), &schema(), 1.5, 0),
            Err(AttackError::Probability(_))
        ));
    }
}
