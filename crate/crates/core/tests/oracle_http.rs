use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use miai_core::attacks::{csmia, TargetRecord};
use miai_core::dataset::{Attribute, Dataset, Provenance, Record, Role, Schema, Value};
use miai_core::models::{train_decision_tree, TargetModel, TreeParams};
use miai_core::oracle::{serve, HttpBackend, Oracle, OracleError};

fn schema() -> Schema {
    Schema::new(
        vec![
            Attribute::categorical("color", &["red", "green", "blue"], Role::Feature),
            Attribute::numeric("size", 0.0, 10.0, Role::Feature),
            Attribute::categorical("secret", &["no", "yes"], Role::Sensitive).with_positive("yes"),
            Attribute::categorical("label", &["a", "b"], Role::TargetLabel),
        ],
        &[],
    )
    .unwrap()
}

fn model() -> Arc<TargetModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records = (0..300)
        .map(|id| {
            let color = rng.gen_range(0..3u32);
            let size = rng.gen_range(0..=10) as f64;
            let secret = u32::from(rng.gen_bool(0.4));
            let label = u32::from((size > 5.0) ^ (secret == 1) ^ rng.gen_bool(0.1));
            Record {
                id,
                values: vec![
                    Value::Cat(color),
                    Value::Num(size),
                    Value::Cat(secret),
                    Value::Cat(label),
                ],
            }
        })
        .collect();
    let ds = Dataset::new(Arc::new(schema()), records, Provenance::Preprocessed);
    Arc::new(
        train_decision_tree(
            &ds,
            TreeParams {
                max_depth: 4,
                min_leaf: 5,
            },
        )
        .unwrap(),
    )
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

#[test]
fn predict_returns_label_and_confidence() {
    let server = serve(model(), "127.0.0.1:0", false).unwrap();
    let mut resp = agent()
        .post(&format!("{}/predict", server.url()))
        .send_json(json!({"attributes": {"color": "blue", "size": 7, "secret": "yes"}}))
        .unwrap();
    assert_eq!(resp.status(), 200);
    let body: serde_json::Value = resp.body_mut().read_json().unwrap();
    assert!(["a", "b"].contains(&body["label"].as_str().unwrap()));
    let conf = body["confidence"].as_f64().unwrap();
    assert!((0.5..=1.0).contains(&conf));
    assert!(body.get("scores").is_none_or(|s| s.is_null()));
}

#[test]
fn scores_only_when_exposed() {
    let server = serve(model(), "127.0.0.1:0", true).unwrap();
    let mut resp = agent()
        .post(&format!("{}/predict", server.url()))
        .send_json(json!({"attributes": {"color": "red", "size": 1, "secret": "no"}}))
        .unwrap();
    let body: serde_json::Value = resp.body_mut().read_json().unwrap();
    let scores = body["scores"].as_object().unwrap();
    let total: f64 = scores.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-5);
}

#[test]
fn malformed_requests_are_rejected() {
    let server = serve(model(), "127.0.0.1:0", false).unwrap();
    let url = format!("{}/predict", server.url());
    let missing = agent()
        .post(&url)
        .send_json(json!({"attributes": {"color": "red", "secret": "no"}}))
        .unwrap();
    assert_eq!(missing.status(), 400);
    let mut garbage = agent()
        .post(&url)
        .content_type("application/json")
        .send("{not json")
        .unwrap();
    assert_eq!(garbage.status(), 400);
    let body: serde_json::Value = garbage.body_mut().read_json().unwrap();
    assert!(body["error"].is_string());
}

#[test]
fn schema_endpoint_matches_model() {
    let m = model();
    let server = serve(m.clone(), "127.0.0.1:0", false).unwrap();
    let backend = HttpBackend::connect(&server.url()).unwrap();
    let oracle = Oracle::new(backend);
    assert_eq!(oracle.schema(), m.schema());
}

#[test]
fn attacks_agree_across_transports() {
    let m = model();
    let server = serve(m.clone(), "127.0.0.1:0", false).unwrap();
    let remote = Oracle::new(HttpBackend::connect(&server.url()).unwrap());
    let local = Oracle::local(m);
    for id in 0..40 {
        let record = TargetRecord {
            id,
            values: vec![
                Value::Cat((id % 3) as u32),
                Value::Num((id % 11) as f64),
                Value::Missing,
                Value::Missing,
            ],
            label: id % 2,
        };
        let a = csmia(&record, &local).unwrap();
        let b = csmia(&record, &remote).unwrap();
        assert_eq!((a.predicted, a.case), (b.predicted, b.case));
    }
    assert_eq!(remote.ledger().total(), 80);
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let server = serve(model(), "127.0.0.1:0", false).unwrap();
    let url = server.url();
    server.shutdown();
    assert!(matches!(
        HttpBackend::connect(&url),
        Err(OracleError::Transport(_))
    ));
}
