//! Attribute inference attacks: the naive and random-guessing baselines, the
//! confusion-matrix attack (FJRMIA), the confidence-score attack (CSMIA), the
//! confidence-modeling attack (CMMIA) and CSMIA with unknown non-sensitive
//! attributes.

mod baseline;
mod cmmia;
mod csmia;
mod fjrmia;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Schema, Value};
use crate::models::{ConfusionMatrix, TreeParams};
use crate::oracle::{Oracle, OracleError, PredictionResponse};

pub use baseline::{naive_attack, naive_choice, random_guessing_attack};
pub use cmmia::{
    cmmia_attack, cmmia_collect, cmmia_features, cmmia_train, AttackBank, CmmiaTables, TrainingRow,
};
pub use csmia::{csmia, csmia_decide, csmia_partial, partial_decide, UnknownSet};
pub use fjrmia::{fjrmia, fjrmia_decide, fjrmia_select};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack requires marginal priors of the sensitive attribute")]
    MissingPriors,
    #[error("attack requires the target model's confusion matrix")]
    MissingConfusion,
    #[error("attack requires the adversary dataset")]
    MissingAdversarySet,
    #[error("invalid priors: {0}")]
    InvalidPriors(String),
    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),
    #[error("random guessing is defined for a binary sensitive attribute, found {0} values")]
    NonBinarySensitive(usize),
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("sensitive attribute has no designated positive value")]
    NoPositiveClass,
    #[error("unknown attribute '{0}' is not a non-sensitive feature of the schema")]
    UnknownAttribute(String),
    #[error("at most two unknown attributes are supported, got {0}")]
    TooManyUnknown(usize),
    #[error("numeric attribute '{0}' has no probe values to enumerate")]
    NoProbeValues(String),
    #[error("record {record_id} has no {what}")]
    IncompleteRecord {
        record_id: usize,
        what: &'static str,
    },
    #[error("record {record_id}: oracle failed after {queries} queries: {source}")]
    Oracle {
        record_id: usize,
        queries: u64,
        #[source]
        source: OracleError,
    },
}

/// CSMIA/CMMIA case: one, several or no candidate values reproduce the true label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Case {
    One,
    Two,
    Three,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::One, Case::Two, Case::Three];

    /// From the number of candidates whose query reproduced the true label.
    pub fn from_correct(n: usize) -> Case {
        match n {
            0 => Case::Three,
            1 => Case::One,
            _ => Case::Two,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

impl From<Case> for u8 {
    fn from(c: Case) -> u8 {
        c.number()
    }
}

impl TryFrom<u8> for Case {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Case::One),
            2 => Ok(Case::Two),
            3 => Ok(Case::Three),
            _ => Err(format!("case must be 1, 2 or 3, got {v}")),
        }
    }
}

/// What the adversary knows about one target: every attribute except the
/// sensitive one, and the true label.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetRecord {
    pub id: usize,
    /// Schema-aligned; the sensitive column is overwritten per query.
    pub values: Vec<Value>,
    pub label: usize,
}

impl TargetRecord {
    /// Targets built from a labelled dataset. The sensitive column is blanked.
    pub fn from_dataset(d: &Dataset) -> Result<Vec<TargetRecord>, AttackError> {
        let s = d.schema().sensitive_index();
        let t = d.schema().target_index();
        d.records()
            .iter()
            .map(|r| {
                let label = r.values[t].as_cat().ok_or(AttackError::IncompleteRecord {
                    record_id: r.id,
                    what: "target label",
                })?;
                let mut values = r.values.clone();
                values[s] = Value::Missing;
                Ok(TargetRecord {
                    id: r.id,
                    values,
                    label,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackPrediction {
    pub record_id: usize,
    /// Index into the sensitive domain.
    pub predicted: usize,
    pub case: Option<Case>,
    pub queries: u64,
    /// Per-candidate evidence: FJRMIA scores, CSMIA confidences, or partial-knowledge correct counts.
    pub aux: Vec<f64>,
}

/// Validated marginal priors `p_1` over the sensitive domain.
pub fn check_priors(priors: &[f64], k: usize) -> Result<(), AttackError> {
    if priors.len() != k {
        return Err(AttackError::InvalidPriors(format!(
            "expected {k} values, got {}",
            priors.len()
        )));
    }
    if priors.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(AttackError::InvalidPriors(
            "values must be non-negative".into(),
        ));
    }
    let sum: f64 = priors.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(AttackError::InvalidPriors(format!("values sum to {sum}")));
    }
    Ok(())
}

/// Queries the oracle once per sensitive candidate, in domain order.
pub(crate) fn query_candidates(
    record: &TargetRecord,
    oracle: &Oracle,
) -> Result<Vec<PredictionResponse>, AttackError> {
    let schema = oracle.schema();
    let s = schema.sensitive_index();
    let mut values = record.values.clone();
    let mut out = Vec::with_capacity(schema.k());
    for i in 0..schema.k() {
        values[s] = Value::Cat(i as u32);
        let r = oracle
            .query(&values)
            .map_err(|source| AttackError::Oracle {
                record_id: record.id,
                queries: i as u64,
                source,
            })?;
        out.push(r);
    }
    Ok(out)
}

/// Index of the first maximum under `key`.
pub(crate) fn first_max<T: PartialOrd>(
    items: impl IntoIterator<Item = (usize, T)>,
) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in items {
        match &best {
            Some((_, b)) if !(v > *b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the first minimum under `key`.
pub(crate) fn first_min<T: PartialOrd>(
    items: impl IntoIterator<Item = (usize, T)>,
) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in items {
        match &best {
            Some((_, b)) if !(v < *b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Runs a per-record attack over all targets in parallel; results keep the
/// order of `records`.
pub fn run_batch<F>(
    records: &[TargetRecord],
    attack: F,
) -> Result<Vec<AttackPrediction>, AttackError>
where
    F: Fn(&TargetRecord) -> Result<AttackPrediction, AttackError> + Sync,
{
    records.par_iter().map(&attack).collect()
}

/// The adversary capabilities an attack may draw on.
#[derive(Clone, Debug, Default)]
pub struct Knowledge {
    pub priors: Option<Vec<f64>>,
    pub confusion: Option<ConfusionMatrix>,
    pub adversary_set: Option<Dataset>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum AttackSpec {
    Naive,
    Random {
        p_positive: f64,
        #[serde(default)]
        seed: u64,
    },
    Fjrmia,
    Csmia,
    Cmmia {
        #[serde(default = "default_bank_params")]
        params: TreeParams,
    },
    CsmiaPartial {
        unknown: Vec<String>,
    },
}

pub fn default_bank_params() -> TreeParams {
    TreeParams {
        max_depth: 8,
        min_leaf: 10,
    }
}

/// Knowledge an attack needs beyond oracle access and the true label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Requirements {
    pub priors: bool,
    pub confusion: bool,
    pub adversary_set: bool,
    pub oracle: bool,
}

impl AttackSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::Naive => "naive",
            AttackSpec::Random { .. } => "random",
            AttackSpec::Fjrmia => "fjrmia",
            AttackSpec::Csmia => "csmia",
            AttackSpec::Cmmia { .. } => "cmmia",
            AttackSpec::CsmiaPartial { .. } => "csmia-partial",
        }
    }

    /// Display label, distinguishing partial-knowledge runs by their unknown set.
    pub fn label(&self) -> String {
        match self {
            AttackSpec::CsmiaPartial { unknown } => format!("csmia-partial[{}]", unknown.join("+")),
            AttackSpec::Random { p_positive, .. } => format!("random[p={p_positive}]"),
            other => other.name().to_string(),
        }
    }

    pub fn requirements(&self) -> Requirements {
        match self {
            AttackSpec::Naive => Requirements {
                priors: true,
                ..Default::default()
            },
            AttackSpec::Random { .. } => Requirements::default(),
            AttackSpec::Fjrmia => Requirements {
                priors: true,
                confusion: true,
                oracle: true,
                ..Default::default()
            },
            AttackSpec::Csmia | AttackSpec::CsmiaPartial { .. } => Requirements {
                oracle: true,
                ..Default::default()
            },
            AttackSpec::Cmmia { .. } => Requirements {
                adversary_set: true,
                oracle: true,
                ..Default::default()
            },
        }
    }

    /// Runs the attack against every target. CMMIA collects and trains on the
    /// adversary set first, within the same ledger run.
    pub fn execute(
        &self,
        records: &[TargetRecord],
        oracle: &Oracle,
        knowledge: &Knowledge,
    ) -> Result<Vec<AttackPrediction>, AttackError> {
        let schema: &Schema = oracle.schema();
        let priors = || {
            knowledge
                .priors
                .as_deref()
                .ok_or(AttackError::MissingPriors)
        };
        match self {
            AttackSpec::Naive => naive_attack(records, priors()?),
            AttackSpec::Random { p_positive, seed } => {
                random_guessing_attack(records, schema, *p_positive, *seed)
            }
            AttackSpec::Fjrmia => {
                let p = priors()?;
                let c = knowledge
                    .confusion
                    .as_ref()
                    .ok_or(AttackError::MissingConfusion)?;
                check_priors(p, schema.k())?;
                run_batch(records, |r| fjrmia(r, oracle, p, c))
            }
            AttackSpec::Csmia => run_batch(records, |r| csmia(r, oracle)),
            AttackSpec::Cmmia { params } => {
                let ds_a = knowledge
                    .adversary_set
                    .as_ref()
                    .ok_or(AttackError::MissingAdversarySet)?;
                let tables = cmmia_collect(ds_a, oracle)?;
                let bank = cmmia_train(&tables, *params);
                run_batch(records, |r| cmmia_attack(r, oracle, &bank))
            }
            AttackSpec::CsmiaPartial { unknown } => {
                let names: Vec<&str> = unknown.iter().map(String::as_str).collect();
                let set = UnknownSet::new(schema, &names)?;
                run_batch(records, |r| csmia_partial(r, oracle, &set))
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use std::sync::Arc;

    use super::*;
    use crate::dataset::{Attribute, Role};
    use crate::oracle::FnBackend;

    /// Schema with a 7-value feature, a 3-value feature, a binary sensitive
    /// attribute and a binary label.
    pub fn schema() -> Schema {
        Schema::new(
            vec![
                Attribute::categorical(
                    "day",
                    &["mo", "tu", "we", "th", "fr", "sa", "su"],
                    Role::Feature,
                ),
                Attribute::categorical("tier", &["low", "mid", "high"], Role::Feature),
                Attribute::categorical("secret", &["no", "yes"], Role::Sensitive)
                    .with_positive("yes"),
                Attribute::categorical("label", &["a", "b"], Role::TargetLabel),
            ],
            &["?"],
        )
        .unwrap()
    }

    pub fn record(id: usize, day: u32, tier: u32, label: usize) -> TargetRecord {
        TargetRecord {
            id,
            values: vec![
                Value::Cat(day),
                Value::Cat(tier),
                Value::Missing,
                Value::Cat(label as u32),
            ],
            label,
        }
    }

    /// Oracle whose response is a pure function of the query values.
    pub fn oracle(f: impl Fn(&[Value]) -> (usize, f64) + Send + Sync + 'static) -> Oracle {
        Oracle::new(FnBackend::new(schema(), move |v: &[Value]| {
            let (label, confidence) = f(v);
            PredictionResponse {
                label,
                confidence,
                scores: None,
            }
        }))
    }

    /// Responses fixed per sensitive candidate, independent of other attributes.
    pub fn scripted(per_candidate: Vec<(usize, f64)>) -> Oracle {
        let per_candidate = Arc::new(per_candidate);
        oracle(move |v| per_candidate[v[2].as_cat().unwrap()])
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn case_numbers_round_trip() {
        for c in Case::ALL {
            assert_eq!(Case::try_from(c.number()).unwrap(), c);
        }
        assert_eq!(serde_json::to_string(&Case::Two).unwrap(), "2");
        assert_eq!(Case::from_correct(0), Case::Three);
        assert_eq!(Case::from_correct(1), Case::One);
        assert_eq!(Case::from_correct(4), Case::Two);
    }

    #[test]
    fn ties_go_to_first() {
        assert_eq!(first_max([(0, 1.0), (1, 1.0)]), Some(0));
        assert_eq!(first_min([(0, 1.0), (1, 1.0)]), Some(0));
        assert_eq!(first_max([(3, 0.5), (5, 0.9)]), Some(5));
        assert_eq!(first_max(Vec::<(usize, f64)>::new()), None);
    }

    #[test]
    fn priors_validation() {
        assert!(check_priors(&[0.5, 0.5], 2).is_ok());
        assert!(check_priors(&[0.5, 0.6], 2).is_err());
        assert!(check_priors(&[1.0], 2).is_err());
        assert!(check_priors(&[1.5, -0.5], 2).is_err());
    }

    #[test]
    fn batch_preserves_order() {
        let oracle = scripted(vec![(0, 0.6), (1, 0.7)]);
        let records: Vec<_> = (0..200)
            .map(|i| record(i, (i % 7) as u32, 0, i % 2))
            .collect();
        let out = run_batch(&records, |r| csmia(r, &oracle)).unwrap();
        assert_eq!(
            out.iter().map(|p| p.record_id).collect::<Vec<_>>(),
            (0..200).collect::<Vec<_>>()
        );
    }

    #[test]
    fn capability_table() {
        assert!(AttackSpec::Fjrmia.requirements().confusion);
        assert!(AttackSpec::Fjrmia.requirements().priors);
        assert_eq!(
            AttackSpec::Csmia.requirements(),
            Requirements {
                oracle: true,
                ..Default::default()
            }
        );
        assert!(
            AttackSpec::Cmmia {
                params: default_bank_params()
            }
            .requirements()
            .adversary_set
        );
    }

    #[test]
    fn execute_reports_missing_knowledge() {
        let oracle = scripted(vec![(0, 0.6), (1, 0.7)]);
        let records = vec![record(0, 0, 0, 0)];
        let k = Knowledge::default();
        assert!(matches!(
            AttackSpec::Naive.execute(&records, &oracle, &k),
            Err(AttackError::MissingPriors)
        ));
        let k = Knowledge {
            priors: Some(vec![0.5, 0.5]),
            ..Default::default()
        };
        assert!(matches!(
            AttackSpec::Fjrmia.execute(&records, &oracle, &k),
            Err(AttackError::MissingConfusion)
        ));
        assert!(matches!(
            AttackSpec::Cmmia {
                params: default_bank_params()
            }
            .execute(&records, &oracle, &k),
            Err(AttackError::MissingAdversarySet)
        ));
    }

    #[test]
    fn spec_json_shape() {
        let spec: AttackSpec =
            serde_json::from_str(r#"{"name":"csmia-partial","unknown":["day"]}"#).unwrap();
        assert_eq!(
            spec,
            AttackSpec::CsmiaPartial {
                unknown: vec!["day".into()]
            }
        );
        let spec: AttackSpec =
            serde_json::from_str(r#"{"name":"random","p_positive":0.5}"#).unwrap();
        assert_eq!(spec.label(), "random[p=0.5]");
    }
}
