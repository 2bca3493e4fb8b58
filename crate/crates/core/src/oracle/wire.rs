use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{OracleError, PredictionResponse};
use crate::dataset::{display_value, Kind, Schema, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub attributes: BTreeMap<String, Json>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub label: String,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<String, f64>>,
}

/// Six fractional digits, the precision confidences travel with.
pub fn round_confidence(c: f64) -> f64 {
    (c * 1e6).round() / 1e6
}

impl WireResponse {
    pub fn from_prediction(labels: &[String], p: &PredictionResponse) -> Self {
        WireResponse {
            label: labels[p.label].clone(),
            confidence: round_confidence(p.confidence),
            scores: p.scores.as_ref().map(|s| {
                labels
                    .iter()
                    .zip(s)
                    .map(|(l, &v)| (l.clone(), round_confidence(v)))
                    .collect()
            }),
        }
    }

    pub fn into_prediction(self, labels: &[String]) -> Result<PredictionResponse, OracleError> {
        let label = labels
            .iter()
            .position(|l| *l == self.label)
            .ok_or_else(|| OracleError::Response(format!("unknown label '{}'", self.label)))?;
        let scores = match self.scores {
            None => None,
            Some(mut map) => {
                let mut v = Vec::with_capacity(labels.len());
                for l in labels {
                    v.push(map.remove(l).ok_or_else(|| {
                        OracleError::Response(format!("no score for label '{l}'"))
                    })?);
                }
                Some(v)
            }
        };
        Ok(PredictionResponse {
            label,
            confidence: self.confidence,
            scores,
        })
    }
}

/// Builds a schema-aligned query from an attribute map. Every feature and the
/// sensitive attribute must be present; other columns are ignored. Categorical
/// values outside the domain are kept as an out-of-range index so the model's
/// unknown-category policy applies.
pub fn values_from_attributes(
    schema: &Schema,
    attributes: &BTreeMap<String, Json>,
) -> Result<Vec<Value>, OracleError> {
    let mut values = vec![Value::Missing; schema.len()];
    for c in schema.input_indices() {
        let attr = &schema.attributes[c];
        let raw = match attributes.get(&attr.name) {
            None | Some(Json::Null) => {
                return Err(OracleError::Malformed(format!(
                    "missing attribute '{}'",
                    attr.name
                )));
            }
            Some(v) => v,
        };
        values[c] = match attr.kind {
            Kind::Categorical => {
                let text = match raw {
                    Json::String(s) => s.trim().to_string(),
                    Json::Number(n) => n.to_string(),
                    Json::Bool(b) => b.to_string(),
                    _ => {
                        return Err(OracleError::Malformed(format!(
                            "attribute '{}' must be a string",
                            attr.name
                        )))
                    }
                };
                Value::Cat(
                    attr.category_index(&text)
                        .unwrap_or(attr.cardinality() as u32),
                )
            }
            Kind::Numeric => {
                let x = match raw {
                    Json::Number(n) => n.as_f64(),
                    Json::String(s) => s.trim().parse().ok(),
                    _ => None,
                };
                match x {
                    Some(x) if x.is_finite() => Value::Num(x),
                    _ => {
                        return Err(OracleError::Malformed(format!(
                            "attribute '{}' must be a number",
                            attr.name
                        )))
                    }
                }
            }
        };
    }
    Ok(values)
}

pub fn values_to_attributes(schema: &Schema, values: &[Value]) -> BTreeMap<String, Json> {
    schema
        .input_indices()
        .into_iter()
        .map(|c| {
            let attr = &schema.attributes[c];
            let v = match values[c] {
                Value::Num(x) => serde_json::Number::from_f64(x).map_or(Json::Null, Json::Number),
                Value::Missing => Json::Null,
                cat => Json::String(display_value(attr, cat)),
            };
            (attr.name.clone(), v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testing::toy_schema;

    #[test]
    fn attribute_round_trip() {
        let schema = toy_schema();
        let values = vec![
            Value::Cat(2),
            Value::Num(3.5),
            Value::Cat(1),
            Value::Missing,
        ];
        let attrs = values_to_attributes(&schema, &values);
        assert_eq!(attrs.len(), 3);
        assert_eq!(values_from_attributes(&schema, &attrs).unwrap(), values);
    }

    #[test]
    fn missing_attribute_is_named() {
        let schema = toy_schema();
        let mut attrs = values_to_attributes(
            &schema,
            &[
                Value::Cat(0),
                Value::Num(1.0),
                Value::Cat(0),
                Value::Missing,
            ],
        );
        attrs.remove("secret");
        match values_from_attributes(&schema, &attrs) {
            Err(OracleError::Malformed(m)) => assert!(m.contains("'secret'")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_category_is_out_of_range() {
        let schema = toy_schema();
        let mut attrs = values_to_attributes(
            &schema,
            &[
                Value::Cat(0),
                Value::Num(1.0),
                Value::Cat(0),
                Value::Missing,
            ],
        );
        attrs.insert("color".into(), Json::String("purple".into()));
        assert_eq!(
            values_from_attributes(&schema, &attrs).unwrap()[0],
            Value::Cat(3)
        );
    }

    #[test]
    fn response_round_trip_rounds_to_six_digits() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let p = PredictionResponse {
            label: 1,
            confidence: 0.123_456_789,
            scores: Some(vec![0.876_543_211, 0.123_456_789]),
        };
        let wire = WireResponse::from_prediction(&labels, &p);
        let text = serde_json::to_string(&wire).unwrap();
        assert!(text.contains("\"confidence\":0.123457"), "{text}");
        let back: WireResponse = serde_json::from_str(&text).unwrap();
        let q = back.into_prediction(&labels).unwrap();
        assert_eq!(q.label, 1);
        assert!((q.confidence - p.confidence).abs() < 1e-6);
    }
}
