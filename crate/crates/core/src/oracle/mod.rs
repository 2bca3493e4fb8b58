//! Black-box access to a target model: a uniform query interface over local
//! and HTTP backends, an HTTP prediction server, and exact query accounting.

mod http;
mod ledger;
mod server;
mod wire;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::dataset::{Schema, Value};
use crate::models::TargetModel;

pub use http::HttpBackend;
pub use ledger::{LedgerSnapshot, QueryLedger, RunCount};
pub use server::{serve, ServerHandle};
pub use wire::{
    round_confidence, values_from_attributes, values_to_attributes, PredictRequest, WireResponse,
};

#[derive(Debug, Error)]
pub enum OracleError {
    /// The query does not fit the model schema.
    #[error("malformed query: {0}")]
    Malformed(String),
    /// The HTTP exchange failed before a response was obtained.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The server answered with a non-success status.
    #[error("server returned {status}: {message}")]
    Server { status: u16, message: String },
    #[error("invalid response: {0}")]
    Response(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

/// `(y', conf, scores)` for one query. `label` indexes the model's class list.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResponse {
    pub label: usize,
    pub confidence: f64,
    pub scores: Option<Vec<f64>>,
}

/// Something that answers prediction queries for a fixed schema.
pub trait Backend: Send + Sync {
    fn schema(&self) -> &Schema;

    /// `values` is aligned with `schema()`; the target and dropped columns are ignored.
    fn predict(&self, values: &[Value]) -> Result<PredictionResponse, OracleError>;

    fn labels(&self) -> &[String] {
        self.schema().target().categories()
    }
}

/// In-process backend wrapping a trained model.
pub struct LocalBackend {
    model: Arc<TargetModel>,
}

impl LocalBackend {
    pub fn new(model: Arc<TargetModel>) -> Self {
        LocalBackend { model }
    }

    pub fn model(&self) -> &TargetModel {
        &self.model
    }
}

impl Backend for LocalBackend {
    fn schema(&self) -> &Schema {
        self.model.schema()
    }

    fn predict(&self, values: &[Value]) -> Result<PredictionResponse, OracleError> {
        check_arity(self.schema(), values)?;
        let p = self.model.predict(values);
        Ok(PredictionResponse {
            label: p.label,
            confidence: p.confidence(),
            scores: Some(p.scores),
        })
    }
}

/// Backend driven by a closure, for hand-built oracles.
pub struct FnBackend<F> {
    schema: Schema,
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&[Value]) -> PredictionResponse + Send + Sync,
{
    pub fn new(schema: Schema, f: F) -> Self {
        FnBackend { schema, f }
    }
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&[Value]) -> PredictionResponse + Send + Sync,
{
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn predict(&self, values: &[Value]) -> Result<PredictionResponse, OracleError> {
        check_arity(&self.schema, values)?;
        Ok((self.f)(values))
    }
}

fn check_arity(schema: &Schema, values: &[Value]) -> Result<(), OracleError> {
    if values.len() != schema.len() {
        return Err(OracleError::Malformed(format!(
            "expected {} values, got {}",
            schema.len(),
            values.len()
        )));
    }
    for &c in &schema.input_indices() {
        if values[c].is_missing() {
            return Err(OracleError::Malformed(format!(
                "missing attribute '{}'",
                schema.attributes[c].name
            )));
        }
    }
    Ok(())
}

type CacheKey = Vec<(u8, u64)>;

fn cache_key(values: &[Value]) -> CacheKey {
    values
        .iter()
        .map(|v| match v {
            Value::Cat(c) => (0, u64::from(*c)),
            Value::Num(x) => (1, x.to_bits()),
            Value::Missing => (2, 0),
        })
        .collect()
}

/// What attacks talk to. Counts every backend call in its ledger and, when
/// caching is on, answers repeated queries from memory.
pub struct Oracle {
    backend: Box<dyn Backend>,
    ledger: QueryLedger,
    cache: Option<Mutex<HashMap<CacheKey, PredictionResponse>>>,
    expose_scores: bool,
}

impl Oracle {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Oracle {
            backend: Box::new(backend),
            ledger: QueryLedger::new(),
            cache: None,
            expose_scores: false,
        }
    }

    pub fn local(model: Arc<TargetModel>) -> Self {
        Self::new(LocalBackend::new(model))
    }

    pub fn with_cache(mut self, enabled: bool) -> Self {
        self.cache = enabled.then(|| Mutex::new(HashMap::new()));
        self
    }

    /// Pass the full score vector through to callers (off by default).
    pub fn with_scores(mut self, expose: bool) -> Self {
        self.expose_scores = expose;
        self
    }

    pub fn schema(&self) -> &Schema {
        self.backend.schema()
    }

    pub fn labels(&self) -> &[String] {
        self.backend.labels()
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn caching(&self) -> bool {
        self.cache.is_some()
    }

    /// Schema-aligned query.
    pub fn query(&self, values: &[Value]) -> Result<PredictionResponse, OracleError> {
        if let Some(cache) = &self.cache {
            let key = cache_key(values);
            if let Some(hit) = cache.lock().unwrap().get(&key).cloned() {
                self.ledger.record_cache_hit();
                return Ok(self.shape(hit));
            }
            let response = self.call(values)?;
            cache.lock().unwrap().insert(key, response.clone());
            return Ok(self.shape(response));
        }
        self.call(values).map(|r| self.shape(r))
    }

    /// Query by attribute name; values are strings for categorical attributes
    /// and numbers for numeric ones.
    pub fn query_attributes(
        &self,
        attributes: &BTreeMap<String, serde_json::Value>,
    ) -> Result<PredictionResponse, OracleError> {
        let values = values_from_attributes(self.schema(), attributes)?;
        self.query(&values)
    }

    fn call(&self, values: &[Value]) -> Result<PredictionResponse, OracleError> {
        let response = self.backend.predict(values)?;
        self.ledger.record_query();
        if response.label >= self.labels().len() {
            return Err(OracleError::Response(format!(
                "label index {} out of range",
                response.label
            )));
        }
        Ok(response)
    }

    fn shape(&self, mut r: PredictionResponse) -> PredictionResponse {
        if !self.expose_scores {
            r.scores = None;
        }
        r
    }
}
