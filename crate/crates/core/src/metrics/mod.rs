//! Attack evaluation: confusion counts for the binary sensitive attribute and
//! the derived precision, recall, accuracy, F1, G-mean and MCC, with per-case,
//! per-class and per-group slices.

mod output;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{AttackPrediction, Case};
use crate::dataset::{Dataset, Schema};

pub use output::{plot_by_attack, plot_by_group, reports_csv, PLOT_METRICS};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("predictions and ground truth disagree: {0}")]
    IdMismatch(String),
    #[error("record {0} has no group")]
    UngroupedRecord(usize),
    #[error("metrics are defined for a binary sensitive attribute, found {0} values")]
    NonBinary(usize),
    #[error("sensitive attribute has no designated positive value")]
    NoPositiveClass,
    #[error("grouping needs attribute '{0}'")]
    MissingAttribute(String),
    #[error("value '{value}' of '{attribute}' belongs to no group")]
    UnmappedValue { attribute: String, value: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        BinaryCounts { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, predicted_positive: bool, actually_positive: bool) {
        match (predicted_positive, actually_positive) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &BinaryCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: u128, den: u128) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// The six metrics as fractions. Each is computed from integer arithmetic and
/// rounded to `f64` once (G-mean and MCC then take one square root).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub g_mean: f64,
    pub mcc: f64,
}

impl Metrics {
    pub fn from_counts(c: &BinaryCounts) -> Self {
        let (tp, tn, fp, fn_) = (c.tp as u128, c.tn as u128, c.fp as u128, c.fn_ as u128);
        let g_mean = ratio(tp * tn, (tp + fn_) * (tn + fp)).sqrt();
        let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        let mcc = if den == 0 {
            0.0
        } else {
            let num = (tp * tn) as i128 - (fp * fn_) as i128;
            // |num| / sqrt(den) as one rounding of num^2 / den, then the root.
            let abs = num.unsigned_abs();
            let mag = match abs.checked_mul(abs) {
                Some(sq) => ratio(sq, den).sqrt(),
                None => abs as f64 / (den as f64).sqrt(),
            };
            if num < 0 {
                -mag
            } else {
                mag
            }
        };
        Metrics {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            accuracy: ratio(tp + tn, tp + tn + fp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            g_mean,
            mcc,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "precision" => self.precision,
            "recall" => self.recall,
            "accuracy" => self.accuracy,
            "f1" => self.f1,
            "g_mean" => self.g_mean,
            "mcc" => self.mcc,
            _ => return None,
        })
    }
}

/// Percentage with two decimals, the reporting precision.
pub fn percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub counts: BinaryCounts,
    #[serde(flatten)]
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slices: BTreeMap<String, EvaluationReport>,
}

impl EvaluationReport {
    pub fn from_counts(counts: BinaryCounts) -> Self {
        EvaluationReport {
            counts,
            metrics: Metrics::from_counts(&counts),
            slices: BTreeMap::new(),
        }
    }
}

/// Ground truth for one attacked record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truth {
    pub record_id: usize,
    pub sensitive: usize,
    pub label: usize,
}

impl Truth {
    /// Records missing a sensitive value or label are skipped.
    pub fn from_dataset(d: &Dataset) -> Vec<Truth> {
        let s = d.schema().sensitive_index();
        let t = d.schema().target_index();
        d.records()
            .iter()
            .filter_map(|r| {
                Some(Truth {
                    record_id: r.id,
                    sensitive: r.values[s].as_cat()?,
                    label: r.values[t].as_cat()?,
                })
            })
            .collect()
    }
}

/// Positive sensitive value of a binary schema.
pub fn positive_class(schema: &Schema) -> Result<usize, MetricsError> {
    if schema.k() != 2 {
        return Err(MetricsError::NonBinary(schema.k()));
    }
    schema
        .sensitive()
        .positive_index()
        .ok_or(MetricsError::NoPositiveClass)
}

/// Pairs each prediction with its truth by record id; both sides must cover
/// the same ids exactly once.
fn align<'a>(
    predictions: &'a [AttackPrediction],
    truth: &'a [Truth],
) -> Result<Vec<(&'a AttackPrediction, &'a Truth)>, MetricsError> {
    if predictions.len() != truth.len() {
        return Err(MetricsError::IdMismatch(format!(
            "{} predictions for {} records",
            predictions.len(),
            truth.len()
        )));
    }
    let mut by_id: HashMap<usize, &Truth> = HashMap::with_capacity(truth.len());
    for t in truth {
        if by_id.insert(t.record_id, t).is_some() {
            return Err(MetricsError::IdMismatch(format!(
                "duplicate truth for record {}",
                t.record_id
            )));
        }
    }
    let mut pairs = Vec::with_capacity(predictions.len());
    for p in predictions {
        let t = by_id.remove(&p.record_id).ok_or_else(|| {
            MetricsError::IdMismatch(format!("no truth for record {}", p.record_id))
        })?;
        pairs.push((p, t));
    }
    Ok(pairs)
}

fn counts_of<'a>(
    pairs: impl IntoIterator<Item = &'a (&'a AttackPrediction, &'a Truth)>,
    positive: usize,
) -> BinaryCounts {
    let mut c = BinaryCounts::default();
    for (p, t) in pairs {
        c.add(p.predicted == positive, t.sensitive == positive);
    }
    c
}

pub fn case_slice_name(case: Case) -> String {
    format!("case{}", case.number())
}

/// Scores predictions against truth. When predictions carry case tags, the
/// report gets one slice per case.
pub fn score(
    predictions: &[AttackPrediction],
    truth: &[Truth],
    positive: usize,
) -> Result<EvaluationReport, MetricsError> {
    let pairs = align(predictions, truth)?;
    let mut report = EvaluationReport::from_counts(counts_of(&pairs, positive));
    if pairs.iter().any(|(p, _)| p.case.is_some()) {
        for case in Case::ALL {
            let slice = pairs.iter().filter(|(p, _)| p.case == Some(case));
            report.slices.insert(
                case_slice_name(case),
                EvaluationReport::from_counts(counts_of(slice, positive)),
            );
        }
    }
    Ok(report)
}

/// One report per true target class, in label order. Empty classes get an
/// all-zero report.
pub fn per_class_breakdown(
    predictions: &[AttackPrediction],
    truth: &[Truth],
    labels: &[String],
    positive: usize,
) -> Result<BTreeMap<String, EvaluationReport>, MetricsError> {
    let pairs = align(predictions, truth)?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(y, name)| {
            let slice = pairs.iter().filter(|(_, t)| t.label == y);
            (
                name.clone(),
                EvaluationReport::from_counts(counts_of(slice, positive)),
            )
        })
        .collect())
}

/// Record id to group name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grouping {
    pub name: String,
    pub groups: Vec<String>,
    pub assignment: HashMap<usize, String>,
}

pub const EDU_GROUPS: [(&str, &[&str]); 3] = [
    (
        "Edu1",
        &[
            "Preschool",
            "1st-4th",
            "5th-6th",
            "7th-8th",
            "9th",
            "10th",
            "11th",
            "12th",
        ],
    ),
    ("Edu2", &["HS-grad", "Some-college"]),
    (
        "Edu3",
        &[
            "Assoc-voc",
            "Assoc-acdm",
            "Bachelors",
            "Masters",
            "Prof-school",
            "Doctorate",
        ],
    ),
];

impl Grouping {
    /// Groups records by the value of a categorical attribute through `clusters`.
    pub fn by_clusters(
        d: &Dataset,
        name: &str,
        attribute: &str,
        clusters: &[(&str, &[&str])],
    ) -> Result<Self, MetricsError> {
        let schema = d.schema();
        let c = schema
            .index_of(attribute)
            .ok_or_else(|| MetricsError::MissingAttribute(attribute.to_string()))?;
        let mut assignment = HashMap::with_capacity(d.len());
        for r in d.records() {
            let value = r.display(schema, c);
            let group = clusters
                .iter()
                .find(|(_, members)| members.contains(&value.as_str()))
                .ok_or_else(|| MetricsError::UnmappedValue {
                    attribute: attribute.to_string(),
                    value: value.clone(),
                })?;
            assignment.insert(r.id, group.0.to_string());
        }
        Ok(Grouping {
            name: name.to_string(),
            groups: clusters.iter().map(|(g, _)| g.to_string()).collect(),
            assignment,
        })
    }

    /// The built-in Adult education clustering.
    pub fn adult_education(d: &Dataset) -> Result<Self, MetricsError> {
        Self::by_clusters(d, "education", "education", &EDU_GROUPS)
    }

    /// Every record in one group.
    pub fn single(d: &Dataset, group: &str) -> Self {
        Grouping {
            name: group.to_string(),
            groups: vec![group.to_string()],
            assignment: d
                .ids()
                .into_iter()
                .map(|id| (id, group.to_string()))
                .collect(),
        }
    }

    pub fn group_of(&self, id: usize) -> Option<&str> {
        self.assignment.get(&id).map(String::as_str)
    }

    pub fn sizes(&self) -> BTreeMap<String, usize> {
        let mut sizes: BTreeMap<String, usize> =
            self.groups.iter().map(|g| (g.clone(), 0)).collect();
        for g in self.assignment.values() {
            *sizes.entry(g.clone()).or_default() += 1;
        }
        sizes
    }
}

/// Combined report with one slice per group (keyed `group name`).
pub fn group_analysis(
    predictions: &[AttackPrediction],
    truth: &[Truth],
    grouping: &Grouping,
    positive: usize,
) -> Result<EvaluationReport, MetricsError> {
    let pairs = align(predictions, truth)?;
    let mut per_group: BTreeMap<String, BinaryCounts> = grouping
        .groups
        .iter()
        .map(|g| (g.clone(), BinaryCounts::default()))
        .collect();
    for (p, t) in &pairs {
        let g = grouping
            .group_of(t.record_id)
            .ok_or(MetricsError::UngroupedRecord(t.record_id))?;
        per_group
            .entry(g.to_string())
            .or_default()
            .add(p.predicted == positive, t.sensitive == positive);
    }
    let mut report = EvaluationReport::from_counts(counts_of(&pairs, positive));
    report.slices = per_group
        .into_iter()
        .map(|(g, c)| (g, EvaluationReport::from_counts(c)))
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn pct2(x: f64) -> f64 {
        (x * 10000.0).round() / 100.0
    }

    #[test]
    fn golden_counts() {
        let m = Metrics::from_counts(&BinaryCounts::new(131, 11709, 509, 2886));
        assert_eq!(pct2(m.precision), 20.47);
        assert_eq!(pct2(m.recall), 4.34);
        assert_eq!(pct2(m.accuracy), 77.72);
        assert_eq!(pct2(m.f1), 7.16);
        assert_eq!(pct2(m.g_mean), 20.40);
        assert_eq!(pct2(m.mcc), 0.35);

        let m = Metrics::from_counts(&BinaryCounts::new(7664, 17085, 1244, 9229));
        assert_eq!(pct2(m.g_mean), 65.03);
        assert_eq!(pct2(m.mcc), 44.34);
    }

    #[test]
    fn perfect_predictor() {
        let m = Metrics::from_counts(&BinaryCounts::new(10, 5, 0, 0));
        assert_eq!(
            m,
            Metrics {
                precision: 1.0,
                recall: 1.0,
                accuracy: 1.0,
                f1: 1.0,
                g_mean: 1.0,
                mcc: 1.0
            }
        );
    }

    #[test]
    fn zero_denominators() {
        let m = Metrics::from_counts(&BinaryCounts::new(0, 80, 0, 20));
        assert_eq!(
            (m.precision, m.recall, m.f1, m.g_mean, m.mcc),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(m.accuracy, 0.8);
        assert_eq!(
            Metrics::from_counts(&BinaryCounts::default()),
            Metrics::default()
        );
    }

    fn pred(id: usize, predicted: usize, case: Option<Case>) -> AttackPrediction {
        AttackPrediction {
            record_id: id,
            predicted,
            case,
            queries: 0,
            aux: vec![],
        }
    }

    fn truth(id: usize, sensitive: usize, label: usize) -> Truth {
        Truth {
            record_id: id,
            sensitive,
            label,
        }
    }

    #[test]
    fn score_aligns_by_id() {
        let p = vec![pred(2, 1, None), pred(1, 0, None)];
        let t = vec![truth(1, 1, 0), truth(2, 1, 0)];
        let r = score(&p, &t, 1).unwrap();
        assert_eq!(r.counts, BinaryCounts::new(1, 0, 0, 1));
        assert!(r.slices.is_empty());
    }

    #[test]
    fn score_rejects_mismatch() {
        let p = vec![pred(3, 1, None)];
        let t = vec![truth(1, 1, 0)];
        assert!(matches!(score(&p, &t, 1), Err(MetricsError::IdMismatch(_))));
        assert!(matches!(
            score(&p, &[], 1),
            Err(MetricsError::IdMismatch(_))
        ));
    }

    #[test]
    fn case_slices_partition() {
        let p = vec![
            pred(0, 1, Some(Case::One)),
            pred(1, 0, Some(Case::Two)),
            pred(2, 1, Some(Case::Three)),
            pred(3, 0, Some(Case::One)),
        ];
        let t = vec![
            truth(0, 1, 0),
            truth(1, 1, 1),
            truth(2, 0, 0),
            truth(3, 0, 1),
        ];
        let r = score(&p, &t, 1).unwrap();
        let mut sum = BinaryCounts::default();
        for s in r.slices.values() {
            sum.merge(&s.counts);
        }
        assert_eq!(sum, r.counts);
        assert_eq!(r.slices["case1"].counts.total(), 2);
    }

    #[test]
    fn per_class_with_empty_partition() {
        let p = vec![pred(0, 1, None), pred(1, 0, None)];
        let t = vec![truth(0, 1, 0), truth(1, 1, 0)];
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let r = per_class_breakdown(&p, &t, &labels, 1).unwrap();
        assert_eq!(r["a"].counts, BinaryCounts::new(1, 0, 0, 1));
        assert_eq!(r["c"], EvaluationReport::default());
    }

    #[test]
    fn single_group_matches_score() {
        let p = vec![pred(0, 1, None), pred(1, 0, None), pred(2, 1, None)];
        let t = vec![truth(0, 1, 0), truth(1, 1, 0), truth(2, 0, 1)];
        let grouping = Grouping {
            name: "all".into(),
            groups: vec!["all".into()],
            assignment: (0..3).map(|i| (i, "all".to_string())).collect(),
        };
        let g = group_analysis(&p, &t, &grouping, 1).unwrap();
        let s = score(&p, &t, 1).unwrap();
        assert_eq!(g.counts, s.counts);
        assert_eq!(g.slices["all"].counts, s.counts);
    }

    #[test]
    fn ungrouped_record_is_an_error() {
        let grouping = Grouping {
            name: "g".into(),
            groups: vec!["x".into()],
            assignment: HashMap::from([(0, "x".to_string())]),
        };
        let r = group_analysis(
            &[pred(0, 1, None), pred(1, 1, None)],
            &[truth(0, 1, 0), truth(1, 0, 0)],
            &grouping,
            1,
        );
        assert!(matches!(r, Err(MetricsError::UngroupedRecord(1))));
    }

    #[test]
    fn report_json_uses_short_count_names() {
        let r = EvaluationReport::from_counts(BinaryCounts::new(1, 2, 3, 4));
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["counts"]["fn"], 4);
        assert!(v.get("g_mean").is_some());
    }

    /// Independent formula path: G-mean from sensitivity and specificity,
    /// MCC from the four predictive rates.
    fn reference(c: &BinaryCounts) -> (f64, f64) {
        let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
        let safe = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
        let tpr = safe(tp, tp + fn_);
        let tnr = safe(tn, tn + fp);
        let g = (tpr * tnr).sqrt();
        let ppv = safe(tp, tp + fp);
        let npv = safe(tn, tn + fn_);
        let fdr = safe(fp, tp + fp);
        let fnr = safe(fn_, tp + fn_);
        let fpr = safe(fp, tn + fp);
        let fo = safe(fn_, tn + fn_);
        let degenerate = tp + fp == 0.0 || tp + fn_ == 0.0 || tn + fp == 0.0 || tn + fn_ == 0.0;
        let mcc = if degenerate {
            0.0
        } else {
            (ppv * tpr * tnr * npv).sqrt() - (fdr * fnr * fpr * fo).sqrt()
        };
        (g, mcc)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn differential_against_reference(tp in 0u64..100_000, tn in 0u64..100_000, fp in 0u64..100_000, fn_ in 0u64..100_000) {
            let c = BinaryCounts::new(tp, tn, fp, fn_);
            let m = Metrics::from_counts(&c);
            let (g, mcc) = reference(&c);
            prop_assert!((m.g_mean - g).abs() < 1e-9, "{:?} {} {}", c, m.g_mean, g);
            prop_assert!((m.mcc - mcc).abs() < 1e-9, "{:?} {} {}", c, m.mcc, mcc);
            for v in [m.precision, m.recall, m.accuracy, m.f1, m.g_mean] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!((-1.0..=1.0).contains(&m.mcc));
        }

        #[test]
        fn complementing_predictions_negates_mcc(tp in 0u64..100_000, tn in 0u64..100_000, fp in 0u64..100_000, fn_ in 0u64..100_000) {
            // Flipping every prediction: TP<->FN, TN<->FP.
            let a = Metrics::from_counts(&BinaryCounts::new(tp, tn, fp, fn_));
            let b = Metrics::from_counts(&BinaryCounts::new(fn_, fp, tn, tp));
            prop_assert_eq!(a.mcc, -b.mcc);
        }

        #[test]
        fn naive_negative_predictor_scores_zero(neg in 0u64..10_000, pos in 1u64..10_000) {
            let m = Metrics::from_counts(&BinaryCounts::new(0, neg, 0, pos));
            prop_assert_eq!((m.precision, m.recall, m.f1, m.g_mean, m.mcc), (0.0, 0.0, 0.0, 0.0, 0.0));
        }
    }
}
