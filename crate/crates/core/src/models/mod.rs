//! Target models: the decision tree and neural network families, their
//! confusion matrices and persistence.

mod net;
mod tree;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Kind, Schema, Value};

pub use net::{Block, InputEncoding, NetParams, NeuralNet};
pub(crate) use tree::argmax;
pub use tree::{ColumnKind, DecisionTree, Node, Split, SplitRule, TreeParams};

const MODEL_FORMAT: &str = "miai-target-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("record {id} has no target label")]
    MissingLabel { id: usize },
    #[error("evaluation set is empty")]
    EmptyEvaluationSet,
    #[error("operation not supported for the {0} family")]
    UnsupportedFamily(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid model document: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    DecisionTree {
        tree: DecisionTree,
    },
    NeuralNet {
        encoding: InputEncoding,
        net: NeuralNet,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::DecisionTree { .. } => "decision-tree",
            Family::NeuralNet { .. } => "neural-net",
        }
    }
}

/// Label index plus the full score vector over the `m` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn confidence(&self) -> f64 {
        self.scores[self.label]
    }
}

/// A trained classifier `f` over schema-aligned records. The target column (and
/// dropped columns) are ignored at prediction time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    format: String,
    version: u32,
    schema: Schema,
    inputs: Vec<usize>,
    #[serde(flatten)]
    family: Family,
}

fn labelled_rows(train: &Dataset) -> Result<(Vec<usize>, Vec<&[Value]>), ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let t = train.schema().target_index();
    let mut labels = Vec::with_capacity(train.len());
    let mut rows = Vec::with_capacity(train.len());
    for r in train.records() {
        let y = r.values[t]
            .as_cat()
            .ok_or(ModelError::MissingLabel { id: r.id })?;
        labels.push(y);
        rows.push(r.values.as_slice());
    }
    Ok((labels, rows))
}

pub(crate) fn column_kinds(schema: &Schema, columns: &[usize]) -> Vec<ColumnKind> {
    columns
        .iter()
        .map(|&c| {
            let a = &schema.attributes[c];
            match a.kind {
                Kind::Categorical => ColumnKind::Categorical {
                    cardinality: a.cardinality(),
                },
                Kind::Numeric => ColumnKind::Numeric,
            }
        })
        .collect()
}

fn project(row: &[Value], columns: &[usize]) -> Vec<Value> {
    columns.iter().map(|&c| row[c]).collect()
}

/// CART tree on the features and the sensitive attribute of `train`.
pub fn train_decision_tree(train: &Dataset, params: TreeParams) -> Result<TargetModel, ModelError> {
    let (labels, rows) = labelled_rows(train)?;
    let schema = train.schema().clone();
    let inputs = schema.input_indices();
    let projected: Vec<Vec<Value>> = rows.iter().map(|r| project(r, &inputs)).collect();
    let tree = DecisionTree::fit(
        column_kinds(&schema, &inputs),
        &projected,
        &labels,
        schema.m(),
        params,
    )?;
    Ok(TargetModel::new(
        schema,
        inputs,
        Family::DecisionTree { tree },
    ))
}

pub fn train_neural_net(train: &Dataset, params: &NetParams) -> Result<TargetModel, ModelError> {
    let (labels, rows) = labelled_rows(train)?;
    let schema = train.schema().clone();
    let inputs = schema.input_indices();
    let encoding = InputEncoding::fit(&schema, &inputs, rows.iter().copied());
    let xs: Vec<Vec<f64>> = rows.iter().map(|r| encoding.encode(r)).collect();
    let net = NeuralNet::fit(&xs, &labels, schema.m(), params)?;
    Ok(TargetModel::new(
        schema,
        inputs,
        Family::NeuralNet { encoding, net },
    ))
}

impl TargetModel {
    pub fn new(schema: Schema, inputs: Vec<usize>, family: Family) -> Self {
        TargetModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            schema,
            inputs,
            family,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Schema indices of the columns the model reads.
    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn labels(&self) -> &[String] {
        self.schema.target().categories()
    }

    pub fn m(&self) -> usize {
        self.labels().len()
    }

    /// `values` is aligned with the model schema. Pure: identical input gives
    /// identical output.
    pub fn predict(&self, values: &[Value]) -> Prediction {
        let scores = match &self.family {
            Family::DecisionTree { tree } => tree.predict_scores(&project(values, &self.inputs)),
            Family::NeuralNet { encoding, net } => net.predict_scores(&encoding.encode(values)),
        };
        Prediction {
            label: argmax(&scores),
            scores,
        }
    }

    /// Normalized impurity decrease per input attribute (decision trees only).
    pub fn importance(&self) -> Result<Vec<(String, f64)>, ModelError> {
        match &self.family {
            Family::DecisionTree { tree } => Ok(self
                .inputs
                .iter()
                .zip(tree.importance())
                .map(|(&c, v)| (self.schema.attributes[c].name.clone(), v))
                .collect()),
            other => Err(ModelError::UnsupportedFamily(other.name())),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: TargetModel =
            serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported document {} v{}",
                model.format, model.version
            )));
        }
        model
            .schema
            .validate()
            .map_err(|e| ModelError::Format(e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// `counts[actual][predicted]` over an evaluation set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Self {
        assert_eq!(labels.len(), counts.len());
        assert!(counts.iter().all(|row| row.len() == labels.len()));
        ConfusionMatrix { labels, counts }
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    pub fn row_total(&self, actual: usize) -> u64 {
        self.counts[actual].iter().sum()
    }

    pub fn total(&self) -> u64 {
        (0..self.m()).map(|y| self.row_total(y)).sum()
    }

    /// `C[y, y'] = Pr[f(x) = y' | y]`; zero for an empty row.
    pub fn rate(&self, actual: usize, predicted: usize) -> f64 {
        let n = self.row_total(actual);
        if n == 0 {
            0.0
        } else {
            self.counts[actual][predicted] as f64 / n as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.m()).map(|y| self.counts[y][y]).sum();
        diag as f64 / self.total().max(1) as f64
    }
}

pub fn confusion_matrix(
    model: &TargetModel,
    eval: &Dataset,
) -> Result<ConfusionMatrix, ModelError> {
    if eval.is_empty() {
        return Err(ModelError::EmptyEvaluationSet);
    }
    let (labels, rows) = labelled_rows(eval)?;
    let m = model.m();
    let mut counts = vec![vec![0u64; m]; m];
    for (y, row) in labels.iter().zip(rows) {
        counts[*y][model.predict(row).label] += 1;
    }
    Ok(ConfusionMatrix::from_counts(
        model.labels().to_vec(),
        counts,
    ))
}
