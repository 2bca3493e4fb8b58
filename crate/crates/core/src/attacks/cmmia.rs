use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{query_candidates, AttackError, AttackPrediction, Case, TargetRecord};
use crate::dataset::{Dataset, Value};
use crate::models::{ColumnKind, DecisionTree, TreeParams};
use crate::oracle::{Oracle, PredictionResponse};

/// Attack-model input: for each candidate `i`, the slots (label `y'_i`,
/// confidence `conf_i`, present). In case 2 only candidates whose prediction
/// matched the true label are present; absent slots carry label index `m` and
/// confidence -1.
pub fn cmmia_features(
    responses: &[PredictionResponse],
    label: usize,
    case: Case,
    m: usize,
) -> Vec<Value> {
    let mut row = Vec::with_capacity(3 * responses.len());
    for r in responses {
        let present = case != Case::Two || r.label == label;
        if present {
            row.extend([
                Value::Cat(r.label as u32),
                Value::Num(r.confidence),
                Value::Cat(1),
            ]);
        } else {
            row.extend([Value::Cat(m as u32), Value::Num(-1.0), Value::Cat(0)]);
        }
    }
    row
}

fn feature_columns(k: usize, m: usize) -> Vec<ColumnKind> {
    (0..k)
        .flat_map(|_| {
            [
                ColumnKind::Categorical { cardinality: m + 1 },
                ColumnKind::Numeric,
                ColumnKind::Categorical { cardinality: 2 },
            ]
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRow {
    pub features: Vec<Value>,
    pub sensitive: usize,
}

/// Attack-model training data partitioned by case and true label.
#[derive(Clone, Debug, PartialEq)]
pub struct CmmiaTables {
    pub k: usize,
    pub m: usize,
    /// `buckets[case][label]`.
    pub buckets: Vec<Vec<Vec<TrainingRow>>>,
    /// Sensitive value counts over the whole adversary set.
    pub sensitive_counts: Vec<u32>,
}

impl CmmiaTables {
    pub fn bucket(&self, case: Case, label: usize) -> &[TrainingRow] {
        &self.buckets[case.index()][label]
    }

    pub fn rows(&self) -> usize {
        self.buckets.iter().flatten().map(Vec::len).sum()
    }
}

/// Queries the oracle `k` times per adversary record and routes each record's
/// responses to its case and label bucket.
pub fn cmmia_collect(ds_a: &Dataset, oracle: &Oracle) -> Result<CmmiaTables, AttackError> {
    let schema = oracle.schema();
    let (k, m) = (schema.k(), schema.m());
    let s = schema.sensitive_index();
    let t = schema.target_index();
    let rows: Vec<(Case, usize, TrainingRow)> = ds_a
        .records()
        .par_iter()
        .map(|r| {
            let sensitive = r.values[s].as_cat().ok_or(AttackError::IncompleteRecord {
                record_id: r.id,
                what: "sensitive value",
            })?;
            let label = r.values[t].as_cat().ok_or(AttackError::IncompleteRecord {
                record_id: r.id,
                what: "target label",
            })?;
            let target = TargetRecord {
                id: r.id,
                values: r.values.clone(),
                label,
            };
            let responses = query_candidates(&target, oracle)?;
            let correct = responses.iter().filter(|p| p.label == label).count();
            let case = Case::from_correct(correct);
            let features = cmmia_features(&responses, label, case, m);
            Ok((
                case,
                label,
                TrainingRow {
                    features,
                    sensitive,
                },
            ))
        })
        .collect::<Result<_, AttackError>>()?;
    let mut buckets = vec![vec![Vec::new(); m]; 3];
    let mut sensitive_counts = vec![0u32; k];
    for (case, label, row) in rows {
        sensitive_counts[row.sensitive] += 1;
        buckets[case.index()][label].push(row);
    }
    Ok(CmmiaTables {
        k,
        m,
        buckets,
        sensitive_counts,
    })
}

/// The `3 * m` attack models `A_l^q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackBank {
    pub k: usize,
    pub m: usize,
    /// `models[case][label]`.
    pub models: Vec<Vec<DecisionTree>>,
}

impl AttackBank {
    pub fn model(&self, case: Case, label: usize) -> &DecisionTree {
        &self.models[case.index()][label]
    }

    pub fn len(&self) -> usize {
        self.models.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One depth-limited tree per bucket. An empty bucket becomes a constant
/// predictor of the adversary set's majority sensitive value.
pub fn cmmia_train(tables: &CmmiaTables, params: TreeParams) -> AttackBank {
    let columns = feature_columns(tables.k, tables.m);
    let models = Case::ALL
        .iter()
        .map(|&case| {
            (0..tables.m)
                .into_par_iter()
                .map(|label| {
                    let bucket = tables.bucket(case, label);
                    if bucket.is_empty() {
                        return DecisionTree::constant(
                            columns.clone(),
                            tables.sensitive_counts.clone(),
                        );
                    }
                    let rows: Vec<Vec<Value>> = bucket.iter().map(|r| r.features.clone()).collect();
                    let ys: Vec<usize> = bucket.iter().map(|r| r.sensitive).collect();
                    DecisionTree::fit(columns.clone(), &rows, &ys, tables.k, params)
                        .expect("bucket is non-empty")
                })
                .collect()
        })
        .collect();
    AttackBank {
        k: tables.k,
        m: tables.m,
        models,
    }
}

pub fn cmmia_attack(
    record: &TargetRecord,
    oracle: &Oracle,
    bank: &AttackBank,
) -> Result<AttackPrediction, AttackError> {
    let responses = query_candidates(record, oracle)?;
    let correct = responses.iter().filter(|p| p.label == record.label).count();
    let case = Case::from_correct(correct);
    let features = cmmia_features(&responses, record.label, case, bank.m);
    let predicted = bank.model(case, record.label).predict_class(&features);
    Ok(AttackPrediction {
        record_id: record.id,
        predicted,
        case: Some(case),
        queries: responses.len() as u64,
        aux: responses.iter().map(|r| r.confidence).collect(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::testing::{oracle, record, schema, scripted};
    use super::*;
    use crate::dataset::{Provenance, Record};

    fn resp(label: usize, confidence: f64) -> PredictionResponse {
        PredictionResponse {
            label,
            confidence,
            scores: None,
        }
    }

    fn adversary_set(rows: &[(u32, u32, u32)]) -> Dataset {
        let records = rows
            .iter()
            .enumerate()
            .map(|(id, &(day, secret, label))| Record {
                id,
                values: vec![
                    Value::Cat(day),
                    Value::Cat(0),
                    Value::Cat(secret),
                    Value::Cat(label),
                ],
            })
            .collect();
        Dataset::new(Arc::new(schema()), records, Provenance::AdversarySet)
    }

    #[test]
    fn case_two_masks_incorrect_slots() {
        let r = [resp(1, 0.7), resp(0, 0.9), resp(1, 0.6)];
        let f = cmmia_features(&r, 1, Case::Two, 2);
        assert_eq!(
            f,
            vec![
                Value::Cat(1),
                Value::Num(0.7),
                Value::Cat(1),
                Value::Cat(2),
                Value::Num(-1.0),
                Value::Cat(0),
                Value::Cat(1),
                Value::Num(0.6),
                Value::Cat(1),
            ]
        );
        let f = cmmia_features(&r, 1, Case::One, 2);
        assert_eq!(f[3..6], [Value::Cat(0), Value::Num(0.9), Value::Cat(1)]);
    }

    #[test]
    fn collect_routes_by_case_and_label() {
        // y' = secret, so label 0 records match exactly candidate 0.
        let o = oracle(|v| (v[2].as_cat().unwrap(), 0.8));
        let ds_a = adversary_set(&[(0, 0, 0), (1, 1, 1), (2, 1, 0)]);
        let tables = cmmia_collect(&ds_a, &o).unwrap();
        assert_eq!(tables.bucket(Case::One, 0).len(), 2);
        assert_eq!(tables.bucket(Case::One, 1).len(), 1);
        assert_eq!(tables.rows(), 3);
        assert_eq!(tables.sensitive_counts, vec![1, 2]);
        assert_eq!(o.ledger().total(), 6);
    }

    #[test]
    fn bank_has_three_models_per_label() {
        let o = scripted(vec![(0, 0.8), (1, 0.7)]);
        let tables = cmmia_collect(&adversary_set(&[(0, 0, 0), (1, 1, 1)]), &o).unwrap();
        let bank = cmmia_train(&tables, TreeParams::default());
        assert_eq!(bank.len(), 6);
    }

    #[test]
    fn empty_bucket_falls_back_to_majority() {
        let o = scripted(vec![(0, 0.8), (1, 0.7)]);
        let tables = cmmia_collect(&adversary_set(&[(0, 1, 0), (1, 1, 0), (2, 0, 0)]), &o).unwrap();
        let bank = cmmia_train(&tables, TreeParams::default());
        // Nothing was collected for case 3.
        assert!(tables.bucket(Case::Three, 1).is_empty());
        assert_eq!(bank.model(Case::Three, 1).depth(), 0);
        assert_eq!(bank.model(Case::Three, 1).predict_class(&[]), 1);
    }

    #[test]
    fn single_class_bucket_is_constant() {
        let o = scripted(vec![(0, 0.8), (1, 0.7)]);
        let tables = cmmia_collect(&adversary_set(&[(0, 1, 0), (3, 1, 0), (5, 1, 0)]), &o).unwrap();
        let bank = cmmia_train(&tables, TreeParams::default());
        let m = bank.model(Case::One, 0);
        assert_eq!(m.depth(), 0);
        let p = cmmia_attack(&record(9, 2, 2, 0), &o, &bank).unwrap();
        assert_eq!((p.predicted, p.case, p.queries), (1, Some(Case::One), 2));
    }

    #[test]
    fn queried_model_matches_case_and_label() {
        // Label-1 records in case 2 with a bank whose A_1^2 predicts 1 and everything else 0.
        let columns = feature_columns(2, 2);
        let zero = DecisionTree::constant(columns.clone(), vec![1, 0]);
        let one = DecisionTree::constant(columns, vec![0, 1]);
        let mut models = vec![vec![zero.clone(), zero.clone()]; 3];
        models[Case::Two.index()][1] = one;
        let bank = AttackBank { k: 2, m: 2, models };
        let o = scripted(vec![(1, 0.6), (1, 0.9)]);
        let p = cmmia_attack(&record(0, 0, 0, 1), &o, &bank).unwrap();
        assert_eq!((p.predicted, p.case), (1, Some(Case::Two)));
        let p = cmmia_attack(&record(0, 0, 0, 0), &o, &bank).unwrap();
        assert_eq!((p.predicted, p.case), (0, Some(Case::Three)));
    }
}
