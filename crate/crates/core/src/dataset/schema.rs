//! Attribute schemas: names, kinds, domains and the role each column plays.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Categorical,
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Feature,
    Sensitive,
    TargetLabel,
    Dropped,
}

/// Categorical domains are explicit value lists; numeric domains are a closed `[min, max]` range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Categories(Vec<String>),
    Range([f64; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: Kind,
    pub domain: Domain,
    pub role: Role,
    /// Positive class of a binary sensitive attribute, used by the metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<String>,
    /// Raw CSV tokens that map onto a domain value (survey codes, label spellings).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: BTreeMap<String, String>,
    /// Values substituted for a numeric attribute when it is unknown to the adversary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<f64>>,
}

impl Attribute {
    pub fn categorical(name: &str, values: &[&str], role: Role) -> Self {
        Attribute {
            name: name.to_string(),
            kind: Kind::Categorical,
            domain: Domain::Categories(values.iter().map(|v| v.to_string()).collect()),
            role,
            positive: None,
            aliases: BTreeMap::new(),
            probes: None,
        }
    }

    pub fn numeric(name: &str, min: f64, max: f64, role: Role) -> Self {
        Attribute {
            name: name.to_string(),
            kind: Kind::Numeric,
            domain: Domain::Range([min, max]),
            role,
            positive: None,
            aliases: BTreeMap::new(),
            probes: None,
        }
    }

    pub fn with_positive(mut self, positive: &str) -> Self {
        self.positive = Some(positive.to_string());
        self
    }

    /// Category list; empty for numeric attributes.
    pub fn categories(&self) -> &[String] {
        match &self.domain {
            Domain::Categories(values) => values,
            Domain::Range(_) => &[],
        }
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        match self.domain {
            Domain::Range([lo, hi]) => Some((lo, hi)),
            Domain::Categories(_) => None,
        }
    }

    /// Number of distinct values (categorical attributes only).
    pub fn cardinality(&self) -> usize {
        self.categories().len()
    }

    pub fn category_index(&self, value: &str) -> Option<u32> {
        let value = self.aliases.get(value).map(String::as_str).unwrap_or(value);
        self.categories()
            .iter()
            .position(|c| c == value)
            .map(|i| i as u32)
    }

    pub fn positive_index(&self) -> Option<usize> {
        let positive = self.positive.as_deref()?;
        self.categories().iter().position(|c| c == positive)
    }

    fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("attribute with empty name".into());
        }
        match (&self.kind, &self.domain) {
            (Kind::Categorical, Domain::Categories(values)) => {
                if values.is_empty() {
                    return Err(format!(
                        "categorical attribute '{}' has an empty domain",
                        self.name
                    ));
                }
                let mut seen = HashSet::new();
                for v in values {
                    if v.is_empty() {
                        return Err(format!("attribute '{}' has an empty category", self.name));
                    }
                    if !seen.insert(v) {
                        return Err(format!("attribute '{}' repeats category '{v}'", self.name));
                    }
                }
                for (raw, target) in &self.aliases {
                    if !values.contains(target) {
                        return Err(format!(
                            "attribute '{}' aliases '{raw}' to unknown category '{target}'",
                            self.name
                        ));
                    }
                }
            }
            (Kind::Numeric, Domain::Range([lo, hi])) => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(format!(
                        "numeric attribute '{}' has an invalid range",
                        self.name
                    ));
                }
            }
            _ => {
                return Err(format!(
                    "attribute '{}' has a domain that does not match its kind",
                    self.name
                ))
            }
        }
        if let Some(positive) = &self.positive {
            if !self.categories().contains(positive) {
                return Err(format!(
                    "positive class '{positive}' is not in the domain of '{}'",
                    self.name
                ));
            }
        }
        Ok(())
    }
}

/// Ordered attribute list of a tabular dataset plus its missing-value tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
}

fn default_missing_tokens() -> Vec<String> {
    vec!["?".into(), "".into(), "NA".into()]
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>, missing_tokens: &[&str]) -> Result<Self, DatasetError> {
        let schema = Schema {
            attributes,
            missing_tokens: missing_tokens.iter().map(|t| t.to_string()).collect(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let schema: Schema =
            serde_json::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut names = HashSet::new();
        for attr in &self.attributes {
            attr.validate().map_err(DatasetError::Schema)?;
            if !names.insert(attr.name.as_str()) {
                return Err(DatasetError::Schema(format!(
                    "duplicate attribute '{}'",
                    attr.name
                )));
            }
        }
        for (role, label) in [
            (Role::Sensitive, "sensitive"),
            (Role::TargetLabel, "target-label"),
        ] {
            let count = self.attributes.iter().filter(|a| a.role == role).count();
            if count != 1 {
                return Err(DatasetError::Schema(format!(
                    "expected exactly one {label} attribute, found {count}"
                )));
            }
        }
        let sensitive = self.sensitive();
        if sensitive.kind != Kind::Categorical || sensitive.cardinality() < 2 {
            return Err(DatasetError::Schema(format!(
                "sensitive attribute '{}' must be categorical with at least two values",
                sensitive.name
            )));
        }
        let target = self.target();
        if target.kind != Kind::Categorical || target.cardinality() < 2 {
            return Err(DatasetError::Schema(format!(
                "target attribute '{}' must be categorical with at least two classes",
                target.name
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    fn role_index(&self, role: Role) -> usize {
        self.attributes
            .iter()
            .position(|a| a.role == role)
            .expect("validated schema has this role")
    }

    pub fn sensitive_index(&self) -> usize {
        self.role_index(Role::Sensitive)
    }

    pub fn target_index(&self) -> usize {
        self.role_index(Role::TargetLabel)
    }

    pub fn sensitive(&self) -> &Attribute {
        &self.attributes[self.sensitive_index()]
    }

    pub fn target(&self) -> &Attribute {
        &self.attributes[self.target_index()]
    }

    /// `k`, the number of candidate sensitive values.
    pub fn k(&self) -> usize {
        self.sensitive().cardinality()
    }

    /// `m`, the number of target classes.
    pub fn m(&self) -> usize {
        self.target().cardinality()
    }

    /// Columns a target model consumes: features and the sensitive attribute, in schema order.
    pub fn input_indices(&self) -> Vec<usize> {
        self.attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a.role, Role::Feature | Role::Sensitive))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn feature_indices(&self) -> Vec<usize> {
        self.attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == Role::Feature)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_missing_token(&self, token: &str) -> bool {
        self.missing_tokens.iter().any(|t| t == token)
    }
}
