//! End-to-end experiments: prepare data, train or connect to a target, run the
//! configured attacks and score them.

mod config;
mod presets;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{AttackPrediction, AttackSpec, Knowledge, TargetRecord};
use crate::dataset::{self, adult_raw_schema, Dataset, Schema};
use crate::metrics::{
    self, group_analysis, per_class_breakdown, score, EvaluationReport, Grouping, Truth,
};
use crate::models::{
    confusion_matrix, train_decision_tree, train_neural_net, ConfusionMatrix, TargetModel,
};
use crate::oracle::{HttpBackend, LedgerSnapshot, Oracle};

pub use config::{
    AttackEntry, DatasetSpec, ExperimentConfig, KnowledgeFlags, ModelSpec, OracleSpec,
    PartialSweep, Preprocessing, ReportSpec,
};
pub use presets::{preset, ADULT_N_A, DEFAULT_SEED, GSS_N_A, PRESETS};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
}

fn stage_error(stage: &'static str, message: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Stage {
        stage,
        message: message.to_string(),
    }
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> ExperimentError {
    move |e| ExperimentError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Preprocessed data and its adversary/target split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub full: Dataset,
    pub ds_a: Dataset,
    pub ds_t: Dataset,
}

/// Loads and preprocesses the dataset described by `spec`, without splitting.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset, ExperimentError> {
    let err = stage("prepare-data");
    let schema = match &spec.schema {
        Some(path) => Schema::load(path).map_err(&err)?,
        None if spec.preprocessing == Preprocessing::Adult => adult_raw_schema(),
        None => return Err(ExperimentError::Config("dataset schema is required".into())),
    };
    let raw = dataset::load_csv(&spec.path, Arc::new(schema)).map_err(&err)?;
    match spec.preprocessing {
        Preprocessing::Adult => dataset::preprocess_adult(&raw).map_err(err),
        Preprocessing::Gss => dataset::preprocess_gss(&raw).map_err(err),
        Preprocessing::None => Ok(raw),
    }
}

pub fn prepare(spec: &DatasetSpec) -> Result<Prepared, ExperimentError> {
    let full = load_dataset(spec)?;
    let (ds_a, ds_t) = dataset::split(&full, spec.n_a, spec.seed).map_err(stage("prepare-data"))?;
    Ok(Prepared { full, ds_a, ds_t })
}

pub fn train(spec: &ModelSpec, ds_t: &Dataset) -> Result<TargetModel, ExperimentError> {
    let err = stage("train-target");
    match spec {
        ModelSpec::DecisionTree { params } => train_decision_tree(ds_t, *params).map_err(err),
        ModelSpec::NeuralNet { params } => train_neural_net(ds_t, params).map_err(err),
        ModelSpec::Load { path } => {
            let model = TargetModel::load(path).map_err(&err)?;
            if model.schema() != ds_t.schema() {
                return Err(stage_error(
                    "train-target",
                    "saved model schema does not match the dataset",
                ));
            }
            Ok(model)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub n_a: usize,
    pub n_t: usize,
    pub split_seed: u64,
    pub sensitive: String,
    pub sensitive_domain: Vec<String>,
    pub positive: String,
    pub target: String,
    pub target_domain: Vec<String>,
    /// Sensitive marginals over DS_T, the priors granted to attacks.
    pub priors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub endpoint: Option<String>,
    /// Accuracy on DS_T.
    pub train_accuracy: f64,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<Vec<(String, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub size: usize,
    pub positive_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub label: String,
    pub spec: AttackSpec,
    pub knowledge: KnowledgeFlags,
    pub queries: u64,
    pub report: EvaluationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<BTreeMap<String, EvaluationReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<EvaluationReport>,
}

/// Everything `run` reports; serializes deterministically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub dataset: DatasetSummary,
    pub model: ModelSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<BTreeMap<String, GroupSummary>>,
    pub attacks: Vec<AttackResult>,
    pub ledger: LedgerSnapshot,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn attack(&self, label: &str) -> Option<&AttackResult> {
        self.attacks.iter().find(|a| a.label == label)
    }

    /// Flat comparison table across attacks, one row per slice.
    pub fn comparison_csv(&self) -> String {
        let rows: Vec<(String, &EvaluationReport)> = self
            .attacks
            .iter()
            .map(|a| (a.label.clone(), &a.report))
            .collect();
        metrics::reports_csv(&rows)
    }
}

pub struct Outcome {
    pub report: ExperimentReport,
    pub predictions: Vec<(String, Vec<AttackPrediction>)>,
    pub schema: Schema,
}

fn build_oracle(
    spec: &OracleSpec,
    model: Option<Arc<TargetModel>>,
) -> Result<Oracle, ExperimentError> {
    let oracle = match (&spec.endpoint, model) {
        (Some(url), _) => Oracle::new(HttpBackend::connect(url).map_err(stage("connect"))?),
        (None, Some(m)) => Oracle::local(m),
        (None, None) => unreachable!("a local oracle always has a model"),
    };
    Ok(oracle
        .with_cache(spec.cache)
        .with_scores(spec.expose_scores))
}

/// Confusion matrix of a remote model, measured through the oracle.
fn remote_confusion(oracle: &Oracle, ds_t: &Dataset) -> Result<ConfusionMatrix, ExperimentError> {
    let m = oracle.labels().len();
    let t = ds_t.schema().target_index();
    let mut counts = vec![vec![0u64; m]; m];
    for r in ds_t.records() {
        let y = r.values[t]
            .as_cat()
            .expect("preprocessed records are complete");
        let p = oracle.query(&r.values).map_err(stage("confusion-matrix"))?;
        counts[y][p.label] += 1;
    }
    Ok(ConfusionMatrix::from_counts(
        oracle.labels().to_vec(),
        counts,
    ))
}

/// Attack list after expanding the partial-knowledge sweep.
fn expand_attacks(
    config: &ExperimentConfig,
    schema: &Schema,
    importance: Option<&[(String, f64)]>,
) -> Vec<AttackEntry> {
    let mut attacks = config.attacks.clone();
    if let Some(sweep) = &config.partial_sweep {
        let mut features: Vec<(String, f64)> = schema
            .feature_indices()
            .into_iter()
            .map(|c| {
                let name = schema.attributes[c].name.clone();
                let imp = importance
                    .and_then(|imp| imp.iter().find(|(n, _)| *n == name).map(|(_, v)| *v))
                    .unwrap_or(0.0);
                (name, imp)
            })
            .collect();
        // Stable: equal importance keeps schema order.
        features.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (name, _) in features {
            attacks.push(AttackEntry::new(AttackSpec::CsmiaPartial {
                unknown: vec![name],
            }));
        }
        for pair in &sweep.pairs {
            attacks.push(AttackEntry::new(AttackSpec::CsmiaPartial {
                unknown: pair.to_vec(),
            }));
        }
    }
    attacks
}

/// Runs the experiment end to end in memory.
pub fn run(config: &ExperimentConfig) -> Result<Outcome, ExperimentError> {
    config.validate()?;
    let prepared = prepare(&config.dataset)?;
    let Prepared { full, ds_a, ds_t } = prepared;
    let schema = ds_t.schema().clone();

    let local = match &config.oracle.endpoint {
        Some(_) => None,
        None => Some(Arc::new(train(&config.model, &ds_t)?)),
    };
    let oracle = build_oracle(&config.oracle, local.clone())?;
    if oracle.schema() != &schema {
        return Err(ExperimentError::Stage {
            stage: "connect",
            message: "oracle schema does not match the dataset".into(),
        });
    }

    let (confusion, importance) = match &local {
        Some(m) => (
            confusion_matrix(m, &ds_t).map_err(stage("train-target"))?,
            m.importance().ok(),
        ),
        None => {
            oracle.ledger().start_run("confusion-matrix");
            (remote_confusion(&oracle, &ds_t)?, None)
        }
    };
    let model_seed = match (&local, &config.model) {
        (Some(_), ModelSpec::NeuralNet { params }) => Some(params.seed),
        _ => None,
    };
    let model = ModelSummary {
        family: local
            .as_ref()
            .map_or("remote", |m| m.family().name())
            .to_string(),
        seed: model_seed,
        endpoint: config.oracle.endpoint.clone(),
        train_accuracy: confusion.accuracy(),
        confusion: confusion.clone(),
        importance: importance.clone(),
    };

    let positive = metrics::positive_class(&schema).map_err(stage("evaluate"))?;
    let priors = ds_t.sensitive_marginals();
    let truth = Truth::from_dataset(&ds_t);
    let targets = TargetRecord::from_dataset(&ds_t).map_err(stage("attack"))?;
    let grouping = match config.report.grouping.as_deref() {
        Some("education") => Some(Grouping::adult_education(&ds_t).map_err(stage("evaluate"))?),
        _ => None,
    };

    let mut results = Vec::new();
    let mut predictions = Vec::new();
    for entry in expand_attacks(config, &schema, importance.as_deref()) {
        let flags = entry.flags();
        let knowledge = Knowledge {
            priors: flags.priors.then(|| priors.clone()),
            confusion: flags.confusion.then(|| confusion.clone()),
            adversary_set: flags.adversary_set.then(|| ds_a.clone()),
        };
        let label = entry.spec.label();
        oracle.ledger().start_run(&label);
        let preds = entry
            .spec
            .execute(&targets, &oracle, &knowledge)
            .map_err(stage("attack"))?;
        let queries = oracle.ledger().current_run();
        let err = stage("evaluate");
        let report = score(&preds, &truth, positive).map_err(&err)?;
        let per_class = if config.report.per_class {
            Some(
                per_class_breakdown(&preds, &truth, schema.target().categories(), positive)
                    .map_err(&err)?,
            )
        } else {
            None
        };
        let groups = match &grouping {
            Some(g) => Some(group_analysis(&preds, &truth, g, positive).map_err(&err)?),
            None => None,
        };
        results.push(AttackResult {
            label: label.clone(),
            spec: entry.spec.clone(),
            knowledge: flags,
            queries,
            report,
            per_class,
            groups,
        });
        predictions.push((label, preds));
    }

    let groups = grouping.as_ref().map(|g| {
        g.sizes()
            .into_iter()
            .map(|(name, size)| {
                let pos = truth
                    .iter()
                    .filter(|t| {
                        g.group_of(t.record_id) == Some(name.as_str()) && t.sensitive == positive
                    })
                    .count();
                let fraction = if size == 0 {
                    0.0
                } else {
                    pos as f64 / size as f64
                };
                (
                    name,
                    GroupSummary {
                        size,
                        positive_fraction: fraction,
                    },
                )
            })
            .collect()
    });

    let sensitive = schema.sensitive();
    let report = ExperimentReport {
        name: config.name.clone(),
        dataset: DatasetSummary {
            records: full.len(),
            n_a: ds_a.len(),
            n_t: ds_t.len(),
            split_seed: config.dataset.seed,
            sensitive: sensitive.name.clone(),
            sensitive_domain: sensitive.categories().to_vec(),
            positive: sensitive.categories()[positive].clone(),
            target: schema.target().name.clone(),
            target_domain: schema.target().categories().to_vec(),
            priors,
        },
        model,
        groups,
        attacks: results,
        ledger: oracle.ledger().snapshot(),
    };
    Ok(Outcome {
        report,
        predictions,
        schema,
    })
}

/// `record_id,predicted,case,queries` rows with sensitive values by name.
pub fn predictions_csv(schema: &Schema, predictions: &[AttackPrediction]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["record_id", "predicted", "case", "queries"])
        .unwrap();
    let domain = schema.sensitive().categories();
    for p in predictions {
        w.write_record([
            p.record_id.to_string(),
            domain[p.predicted].clone(),
            p.case.map_or(String::new(), |c| c.number().to_string()),
            p.queries.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_all(outcome: &Outcome, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir.join("predictions"))?;
    let report = &outcome.report;
    fs::write(dir.join("report.json"), report.to_json())?;
    fs::write(dir.join("comparison.csv"), report.comparison_csv())?;
    let overall: Vec<(String, &EvaluationReport)> = report
        .attacks
        .iter()
        .map(|a| (a.label.clone(), &a.report))
        .collect();
    fs::write(
        dir.join("plot_attacks.csv"),
        metrics::plot_by_attack(&overall),
    )?;
    let grouped: Vec<(String, &EvaluationReport)> = report
        .attacks
        .iter()
        .filter_map(|a| a.groups.as_ref().map(|g| (a.label.clone(), g)))
        .collect();
    if !grouped.is_empty() {
        fs::write(
            dir.join("plot_groups.csv"),
            metrics::plot_by_group(&grouped),
        )?;
    }
    for (label, preds) in &outcome.predictions {
        let stem = file_stem(label);
        fs::write(
            dir.join("predictions").join(format!("{stem}.csv")),
            predictions_csv(&outcome.schema, preds),
        )?;
        fs::write(
            dir.join("predictions").join(format!("{stem}.json")),
            serde_json::to_string(preds).expect("predictions serialize"),
        )?;
    }
    Ok(())
}

/// Writes the outcome into `dir` atomically: everything lands in a sibling
/// staging directory first, which replaces `dir` only when complete.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<(), ExperimentError> {
    let name = dir
        .file_name()
        .ok_or_else(|| stage_error("report", "output path has no directory name"))?
        .to_string_lossy()
        .into_owned();
    let staging: PathBuf = dir.with_file_name(format!(".{name}.partial"));
    let _ = fs::remove_dir_all(&staging);
    let result = write_all(outcome, &staging).and_then(|_| {
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&staging, dir)
    });
    result.map_err(|e| {
        let _ = fs::remove_dir_all(&staging);
        stage_error("report", e)
    })
}
