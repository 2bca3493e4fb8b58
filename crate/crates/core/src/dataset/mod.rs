//! Typed tabular data: schemas, records, CSV ingestion, preprocessing presets
//! and the adversary/target split.

mod csv_io;
mod preprocess;
mod schema;
mod split;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_csv, write_csv};
pub use preprocess::{
    adult_raw_schema, preprocess_adult, preprocess_gss, ADULT_MARRIED, ADULT_SINGLE,
};
pub use schema::{Attribute, Domain, Kind, Role, Schema};
pub use split::split;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("header mismatch: {0}")]
    Header(String),
    #[error("row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },
    #[error("required columns absent: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("split size {n_a} out of range for a dataset of {len} records")]
    SplitRange { n_a: usize, len: usize },
}

/// One cell. Categorical values hold an index into the attribute's domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Cat(u32),
    Num(f64),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_cat(&self) -> Option<usize> {
        match self {
            Value::Cat(i) => Some(*i as usize),
            _ => None,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }
}

/// A row with a stable identity (its index in the dataset it was loaded or preprocessed into).
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: usize,
    pub values: Vec<Value>,
}

impl Record {
    pub fn get<'a>(&'a self, schema: &Schema, name: &str) -> Option<&'a Value> {
        schema.index_of(name).map(|i| &self.values[i])
    }

    /// Human-readable value of column `index`.
    pub fn display(&self, schema: &Schema, index: usize) -> String {
        display_value(&schema.attributes[index], self.values[index])
    }
}

pub(crate) fn display_value(attr: &Attribute, value: Value) -> String {
    match value {
        Value::Cat(i) => attr
            .categories()
            .get(i as usize)
            .cloned()
            .unwrap_or_default(),
        Value::Num(v) => format_number(v),
        Value::Missing => String::new(),
    }
}

pub(crate) fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Raw,
    Preprocessed,
    AdversarySet,
    TargetSet,
}

/// Immutable after construction; share via `Arc` across readers.
#[derive(Clone, Debug)]
pub struct Dataset {
    schema: Arc<Schema>,
    records: Vec<Record>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, records: Vec<Record>, provenance: Provenance) -> Self {
        debug_assert!(records.iter().all(|r| r.values.len() == schema.len()));
        Dataset {
            schema,
            records,
            provenance,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.id).collect()
    }

    /// Sensitive value index of every record (None where missing).
    pub fn sensitive_values(&self) -> Vec<Option<usize>> {
        let s = self.schema.sensitive_index();
        self.records.iter().map(|r| r.values[s].as_cat()).collect()
    }

    pub fn target_values(&self) -> Vec<Option<usize>> {
        let t = self.schema.target_index();
        self.records.iter().map(|r| r.values[t].as_cat()).collect()
    }

    /// Empirical marginal distribution of the sensitive attribute.
    pub fn sensitive_marginals(&self) -> Vec<f64> {
        let k = self.schema.k();
        let mut counts = vec![0usize; k];
        let mut total = 0usize;
        for v in self.sensitive_values().into_iter().flatten() {
            counts[v] += 1;
            total += 1;
        }
        counts
            .into_iter()
            .map(|c| {
                if total == 0 {
                    1.0 / k as f64
                } else {
                    c as f64 / total as f64
                }
            })
            .collect()
    }

    /// Records with at least one missing value in a non-dropped column.
    pub fn incomplete_records(&self) -> usize {
        let live: Vec<usize> = (0..self.schema.len())
            .filter(|&i| self.schema.attributes[i].role != Role::Dropped)
            .collect();
        self.records
            .iter()
            .filter(|r| live.iter().any(|&i| r.values[i].is_missing()))
            .count()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Subset by record position, keeping record ids.
    pub fn select(&self, positions: &[usize], provenance: Provenance) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            records: positions.iter().map(|&p| self.records[p].clone()).collect(),
            provenance,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn marginals_sum_to_one() {
        let schema = toy_schema();
        let records = vec![
            toy_record(0, 0, 1.0, 0, 0),
            toy_record(1, 1, 2.0, 1, 1),
            toy_record(2, 2, 3.0, 0, 0),
            toy_record(3, 2, 3.0, 0, 1),
        ];
        let d = Dataset::new(schema, records, Provenance::Raw);
        let p = d.sensitive_marginals();
        assert_eq!(p, vec![0.75, 0.25]);
    }

    #[test]
    fn display_formats_integers_without_fraction() {
        assert_eq!(format_number(40.0), "40");
        assert_eq!(format_number(0.5), "0.5");
    }
}
