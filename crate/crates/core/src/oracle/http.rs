use std::time::Duration;

use ureq::Agent;

use super::wire::{values_to_attributes, PredictRequest, WireResponse};
use super::{check_arity, Backend, OracleError, PredictionResponse};
use crate::dataset::{Schema, Value};

/// Backend that forwards queries to a prediction server.
pub struct HttpBackend {
    agent: Agent,
    base: String,
    schema: Schema,
}

fn transport(e: ureq::Error) -> OracleError {
    OracleError::Transport(e.to_string())
}

impl HttpBackend {
    /// Connects to `base` (e.g. `http://127.0.0.1:8080`) and fetches its schema.
    pub fn connect(base: &str) -> Result<Self, OracleError> {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .max_idle_connections_per_host(64)
            .build()
            .into();
        let base = base.trim_end_matches('/').to_string();
        let mut response = agent
            .get(format!("{base}/schema"))
            .call()
            .map_err(transport)?;
        let status = response.status().as_u16();
        if status != 200 {
            let message = response.body_mut().read_to_string().unwrap_or_default();
            return Err(OracleError::Server { status, message });
        }
        let schema: Schema = response
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Response(e.to_string()))?;
        schema
            .validate()
            .map_err(|e| OracleError::Response(e.to_string()))?;
        Ok(HttpBackend {
            agent,
            base,
            schema,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }
}

impl Backend for HttpBackend {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn predict(&self, values: &[Value]) -> Result<PredictionResponse, OracleError> {
        check_arity(&self.schema, values)?;
        let request = PredictRequest {
            attributes: values_to_attributes(&self.schema, values),
        };
        let mut response = self
            .agent
            .post(format!("{}/predict", self.base))
            .send_json(&request)
            .map_err(transport)?;
        let status = response.status().as_u16();
        if status != 200 {
            let message = response.body_mut().read_to_string().unwrap_or_default();
            return Err(OracleError::Server { status, message });
        }
        let wire: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Response(e.to_string()))?;
        wire.into_prediction(self.labels())
    }
}
