//! Python bindings: datasets, target models, oracles, attacks and metrics.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value as Json;

use miai_core::attacks::{self as core_attacks, AttackSpec, Knowledge, TargetRecord};
use miai_core::dataset::{self, Schema as CoreSchema};
use miai_core::experiment::{self, preset, DatasetSpec, Preprocessing};
use miai_core::metrics::{self, BinaryCounts, EvaluationReport, Grouping, Truth};
use miai_core::models::{self, NetParams, TargetModel as CoreModel, TreeParams};
use miai_core::oracle::{self, HttpBackend, Oracle as CoreOracle, ServerHandle};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &Json) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Json::Null => py.None().into_bound(py),
        Json::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Json::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Json::String(s) => s.into_pyobject(py)?.into_any(),
        Json::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Json::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &serde_json::to_value(value).map_err(err)?)
}

/// Attribute values from a Python mapping of name to str, int or float.
fn attributes(values: &Bound<'_, PyDict>) -> PyResult<BTreeMap<String, Json>> {
    let mut out = BTreeMap::new();
    for (k, v) in values.iter() {
        let key: String = k.extract()?;
        let value = if v.is_none() {
            Json::Null
        } else if let Ok(s) = v.extract::<String>() {
            Json::String(s)
        } else if let Ok(i) = v.extract::<i64>() {
            Json::from(i)
        } else if let Ok(f) = v.extract::<f64>() {
            serde_json::Number::from_f64(f).map_or(Json::Null, Json::Number)
        } else {
            return Err(PyValueError::new_err(format!(
                "attribute '{key}' must be a str or a number"
            )));
        };
        out.insert(key, value);
    }
    Ok(out)
}

/// An attribute schema.
#[pyclass(module = "miai", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Schema {
    inner: Arc<CoreSchema>,
}

#[pymethods]
impl Schema {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Schema {
            inner: Arc::new(CoreSchema::load(&path).map_err(err)?),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Schema {
            inner: Arc::new(CoreSchema::from_json(text).map_err(err)?),
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner
            .attributes
            .iter()
            .map(|a| a.name.clone())
            .collect()
    }

    #[getter]
    fn sensitive(&self) -> String {
        self.inner.sensitive().name.clone()
    }

    #[getter]
    fn sensitive_domain(&self) -> Vec<String> {
        self.inner.sensitive().categories().to_vec()
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.target().name.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.target().categories().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A tabular dataset with record ids.
#[pyclass(module = "miai", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: Arc<dataset::Dataset>,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load_csv(path: PathBuf, schema: &Schema) -> PyResult<Self> {
        let d = dataset::load_csv(&path, schema.inner.clone()).map_err(err)?;
        Ok(Dataset { inner: Arc::new(d) })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        dataset::write_csv(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn schema(&self) -> Schema {
        Schema {
            inner: self.inner.schema_arc(),
        }
    }

    fn ids(&self) -> Vec<usize> {
        self.inner.ids()
    }

    /// Fraction of records holding each sensitive value, in domain order.
    fn sensitive_marginals(&self) -> Vec<f64> {
        self.inner.sensitive_marginals()
    }

    /// Record `i` as a mapping of attribute name to display value.
    fn record(&self, i: usize) -> PyResult<BTreeMap<String, String>> {
        let schema = self.inner.schema();
        let r = self
            .inner
            .records()
            .get(i)
            .ok_or_else(|| PyKeyError::new_err(format!("record {i} out of range")))?;
        Ok((0..schema.len())
            .map(|c| (schema.attributes[c].name.clone(), r.display(schema, c)))
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Loads, preprocesses and splits a dataset into `(full, ds_a, ds_t)`.
/// `preprocessing` is one of `adult`, `gss` or `none`.
#[pyfunction]
#[pyo3(signature = (path, preprocessing, n_a, seed = 7, schema = None))]
fn prepare(
    path: PathBuf,
    preprocessing: &str,
    n_a: usize,
    seed: u64,
    schema: Option<PathBuf>,
) -> PyResult<(Dataset, Dataset, Dataset)> {
    let preprocessing = match preprocessing {
        "adult" => Preprocessing::Adult,
        "gss" => Preprocessing::Gss,
        "none" => Preprocessing::None,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown preprocessing '{other}'"
            )))
        }
    };
    let spec = DatasetSpec {
        path,
        schema,
        preprocessing,
        n_a,
        seed,
    };
    let p = experiment::prepare(&spec).map_err(err)?;
    let wrap = |d| Dataset { inner: Arc::new(d) };
    Ok((wrap(p.full), wrap(p.ds_a), wrap(p.ds_t)))
}

/// A trained target classifier.
#[pyclass(module = "miai", frozen)]
struct TargetModel {
    inner: Arc<CoreModel>,
}

#[pymethods]
impl TargetModel {
    #[staticmethod]
    #[pyo3(signature = (train, max_depth = 12, min_leaf = 5))]
    fn train_tree(
        py: Python<'_>,
        train: &Dataset,
        max_depth: usize,
        min_leaf: usize,
    ) -> PyResult<Self> {
        let d = train.inner.clone();
        let m = py
            .detach(|| {
                models::train_decision_tree(
                    &d,
                    TreeParams {
                        max_depth,
                        min_leaf,
                    },
                )
            })
            .map_err(err)?;
        Ok(TargetModel { inner: Arc::new(m) })
    }

    #[staticmethod]
    #[pyo3(signature = (train, hidden = vec![64, 32], epochs = None, learning_rate = None, seed = 7))]
    fn train_net(
        py: Python<'_>,
        train: &Dataset,
        hidden: Vec<usize>,
        epochs: Option<usize>,
        learning_rate: Option<f64>,
        seed: u64,
    ) -> PyResult<Self> {
        let defaults = NetParams::default();
        let params = NetParams {
            hidden,
            epochs: epochs.unwrap_or(defaults.epochs),
            learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
            seed,
            ..defaults
        };
        let d = train.inner.clone();
        let m = py
            .detach(|| models::train_neural_net(&d, &params))
            .map_err(err)?;
        Ok(TargetModel { inner: Arc::new(m) })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(TargetModel {
            inner: Arc::new(CoreModel::load(&path).map_err(err)?),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family().name()
    }

    #[getter]
    fn schema(&self) -> Schema {
        Schema {
            inner: Arc::new(self.inner.schema().clone()),
        }
    }

    /// Predicted label name and the full score vector for one record given as
    /// a mapping of attribute name to value.
    fn predict(&self, values: &Bound<'_, PyDict>) -> PyResult<(String, Vec<f64>)> {
        let values = oracle::values_from_attributes(self.inner.schema(), &attributes(values)?)
            .map_err(err)?;
        let p = self.inner.predict(&values);
        Ok((self.inner.labels()[p.label].clone(), p.scores))
    }

    /// Normalized impurity decrease per input attribute (decision trees only).
    fn importance(&self) -> PyResult<Vec<(String, f64)>> {
        self.inner.importance().map_err(err)
    }

    /// Confusion matrix on `data` as a list of rows (actual) of counts (predicted).
    fn confusion_matrix(&self, data: &Dataset) -> PyResult<Vec<Vec<u64>>> {
        Ok(models::confusion_matrix(&self.inner, &data.inner)
            .map_err(err)?
            .counts)
    }

    /// Serves the model over HTTP; bind to port 0 for an ephemeral port.
    #[pyo3(signature = (bind = "127.0.0.1:0", expose_scores = false))]
    fn serve(&self, bind: &str, expose_scores: bool) -> PyResult<Server> {
        let handle = oracle::serve(self.inner.clone(), bind, expose_scores).map_err(err)?;
        Ok(Server {
            url: handle.url(),
            handle: std::sync::Mutex::new(Some(handle)),
        })
    }
}

/// A running prediction server.
#[pyclass(module = "miai", frozen)]
struct Server {
    url: String,
    handle: std::sync::Mutex<Option<ServerHandle>>,
}

#[pymethods]
impl Server {
    #[getter]
    fn url(&self) -> String {
        self.url.clone()
    }

    fn shutdown(&self, py: Python<'_>) {
        let handle = self.handle.lock().unwrap().take();
        if let Some(h) = handle {
            py.detach(|| h.shutdown());
        }
    }
}

/// Black-box query access to a model, with a query ledger.
#[pyclass(module = "miai", frozen)]
struct Oracle {
    inner: Arc<CoreOracle>,
}

#[pymethods]
impl Oracle {
    #[staticmethod]
    #[pyo3(signature = (model, cache = false))]
    fn local(model: &TargetModel, cache: bool) -> Self {
        Oracle {
            inner: Arc::new(CoreOracle::local(model.inner.clone()).with_cache(cache)),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (url, cache = false))]
    fn http(py: Python<'_>, url: &str, cache: bool) -> PyResult<Self> {
        let backend = py.detach(|| HttpBackend::connect(url)).map_err(err)?;
        Ok(Oracle {
            inner: Arc::new(CoreOracle::new(backend).with_cache(cache)),
        })
    }

    /// Predicted label name and confidence for one record.
    fn query(&self, py: Python<'_>, values: &Bound<'_, PyDict>) -> PyResult<(String, f64)> {
        let attrs = attributes(values)?;
        let o = self.inner.clone();
        let r = py.detach(|| o.query_attributes(&attrs)).map_err(err)?;
        Ok((self.inner.labels()[r.label].clone(), r.confidence))
    }

    #[getter]
    fn queries(&self) -> u64 {
        self.inner.ledger().total()
    }

    #[getter]
    fn schema(&self) -> Schema {
        Schema {
            inner: Arc::new(self.inner.schema().clone()),
        }
    }

    /// Ledger totals with per-run counts.
    fn ledger<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.ledger().snapshot())
    }
}

/// A list of per-record attack predictions.
#[pyclass(module = "miai", frozen)]
struct Predictions {
    label: String,
    inner: Vec<core_attacks::AttackPrediction>,
    domain: Vec<String>,
}

#[pymethods]
impl Predictions {
    #[getter]
    fn attack(&self) -> String {
        self.label.clone()
    }

    #[getter]
    fn queries(&self) -> u64 {
        self.inner.iter().map(|p| p.queries).sum()
    }

    /// `(record_id, predicted value, case or None)` per record.
    fn rows(&self) -> Vec<(usize, String, Option<u8>)> {
        self.inner
            .iter()
            .map(|p| {
                (
                    p.record_id,
                    self.domain[p.predicted].clone(),
                    p.case.map(|c| c.number()),
                )
            })
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Runs an attack against every record of `targets` through `oracle`.
/// Priors come from `targets`; FJRMIA's confusion matrix is measured on
/// `targets` through the oracle. CMMIA needs `adversary_set`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (name, targets, oracle, adversary_set = None, unknown = None, p_positive = 0.5, seed = 7))]
fn attack(
    py: Python<'_>,
    name: &str,
    targets: &Dataset,
    oracle: &Oracle,
    adversary_set: Option<&Dataset>,
    unknown: Option<Vec<String>>,
    p_positive: f64,
    seed: u64,
) -> PyResult<Predictions> {
    let spec = match name {
        "naive" => AttackSpec::Naive,
        "random" => AttackSpec::Random { p_positive, seed },
        "fjrmia" => AttackSpec::Fjrmia,
        "csmia" => AttackSpec::Csmia,
        "cmmia" => AttackSpec::Cmmia {
            params: core_attacks::default_bank_params(),
        },
        "csmia-partial" => AttackSpec::CsmiaPartial {
            unknown: unknown.unwrap_or_default(),
        },
        other => return Err(PyValueError::new_err(format!("unknown attack '{other}'"))),
    };
    let ds_t = targets.inner.clone();
    let o = oracle.inner.clone();
    let ds_a = adversary_set.map(|d| d.inner.clone());
    let preds = py
        .detach(|| -> Result<_, String> {
            let need = spec.requirements();
            let confusion = if need.confusion {
                let m = o.labels().len();
                let t = ds_t.schema().target_index();
                let mut counts = vec![vec![0u64; m]; m];
                for r in ds_t.records() {
                    let y = r.values[t]
                        .as_cat()
                        .ok_or("target record without a label")?;
                    counts[y][o.query(&r.values).map_err(|e| e.to_string())?.label] += 1;
                }
                Some(models::ConfusionMatrix::from_counts(
                    o.labels().to_vec(),
                    counts,
                ))
            } else {
                None
            };
            let knowledge = Knowledge {
                priors: Some(ds_t.sensitive_marginals()),
                confusion,
                adversary_set: ds_a.map(|d| (*d).clone()),
            };
            let records = TargetRecord::from_dataset(&ds_t).map_err(|e| e.to_string())?;
            o.ledger().start_run(&spec.label());
            spec.execute(&records, &o, &knowledge)
                .map_err(|e| e.to_string())
        })
        .map_err(err)?;
    Ok(Predictions {
        label: spec.label(),
        inner: preds,
        domain: targets.inner.schema().sensitive().categories().to_vec(),
    })
}

fn report_dict<'py>(py: Python<'py>, r: &EvaluationReport) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, r)
}

/// Scores predictions against the true sensitive values in `truth`. With
/// `grouping="education"` the report carries one slice per education group.
#[pyfunction]
#[pyo3(signature = (predictions, truth, grouping = None))]
fn score<'py>(
    py: Python<'py>,
    predictions: &Predictions,
    truth: &Dataset,
    grouping: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let positive = metrics::positive_class(truth.inner.schema()).map_err(err)?;
    let t = Truth::from_dataset(&truth.inner);
    let report = match grouping {
        None => metrics::score(&predictions.inner, &t, positive),
        Some("education") => {
            let g = Grouping::adult_education(&truth.inner).map_err(err)?;
            metrics::group_analysis(&predictions.inner, &t, &g, positive)
        }
        Some(other) => return Err(PyValueError::new_err(format!("unknown grouping '{other}'"))),
    }
    .map_err(err)?;
    report_dict(py, &report)
}

/// Precision, recall, accuracy, F1, G-mean and MCC (as fractions) from counts.
#[pyfunction]
#[pyo3(name = "metrics")]
fn metrics_from_counts<'py>(
    py: Python<'py>,
    tp: u64,
    tn: u64,
    fp: u64,
    fn_: u64,
) -> PyResult<Bound<'py, PyAny>> {
    report_dict(
        py,
        &EvaluationReport::from_counts(BinaryCounts::new(tp, tn, fp, fn_)),
    )
}

/// Runs a named experiment preset and returns its report as a dict.
#[pyfunction]
#[pyo3(signature = (name, data_dir = PathBuf::from("data"), seed = None, out = None))]
fn run_preset<'py>(
    py: Python<'py>,
    name: &str,
    data_dir: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut config = preset(name, &data_dir).map_err(err)?;
    if let Some(s) = seed {
        config.override_seed(s);
    }
    let outcome = py.detach(|| experiment::run(&config)).map_err(err)?;
    if let Some(dir) = out {
        experiment::write_outputs(&outcome, &dir).map_err(err)?;
    }
    to_py(py, &outcome.report)
}

#[pymodule]
fn miai(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Schema>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<TargetModel>()?;
    m.add_class::<Oracle>()?;
    m.add_class::<Server>()?;
    m.add_class::<Predictions>()?;
    m.add_function(wrap_pyfunction!(prepare, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_from_counts, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add("PRESETS", experiment::PRESETS.to_vec())?;
    Ok(())
}
