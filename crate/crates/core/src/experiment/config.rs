use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::attacks::{AttackSpec, Requirements};
use crate::models::{NetParams, TreeParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preprocessing {
    Adult,
    Gss,
    /// The CSV is already preprocessed; the schema file must designate the
    /// sensitive attribute and target label.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    /// Schema of the CSV. Optional for Adult, which has a built-in raw schema.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    pub preprocessing: Preprocessing,
    pub n_a: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    DecisionTree {
        #[serde(default)]
        params: TreeParams,
    },
    NeuralNet {
        #[serde(default)]
        params: NetParams,
    },
    /// A model saved by `train-target`.
    Load { path: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    /// Query a running server instead of the in-process model.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub cache: bool,
    #[serde(default)]
    pub expose_scores: bool,
}

/// Which adversary capabilities an attack is granted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeFlags {
    #[serde(default)]
    pub priors: bool,
    #[serde(default)]
    pub confusion: bool,
    #[serde(default)]
    pub adversary_set: bool,
}

impl KnowledgeFlags {
    pub fn granting(r: Requirements) -> Self {
        KnowledgeFlags {
            priors: r.priors,
            confusion: r.confusion,
            adversary_set: r.adversary_set,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackEntry {
    #[serde(flatten)]
    pub spec: AttackSpec,
    /// Defaults to exactly what the attack needs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<KnowledgeFlags>,
}

impl AttackEntry {
    pub fn new(spec: AttackSpec) -> Self {
        AttackEntry {
            spec,
            knowledge: None,
        }
    }

    pub fn flags(&self) -> KnowledgeFlags {
        self.knowledge
            .unwrap_or_else(|| KnowledgeFlags::granting(self.spec.requirements()))
    }
}

/// Partial-knowledge sweep: every non-sensitive feature unknown in turn, in
/// decreasing model importance, then the listed combinations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialSweep {
    #[serde(default)]
    pub pairs: Vec<[String; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSpec {
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Built-in grouping for group analysis (`education` on Adult).
    #[serde(default)]
    pub grouping: Option<String>,
    #[serde(default = "yes")]
    pub per_class: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    pub attacks: Vec<AttackEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial_sweep: Option<PartialSweep>,
    #[serde(default)]
    pub report: ReportSpec,
}

fn config_error(message: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(message.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        // Relative paths resolve against the config file's directory.
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        if let Some(s) = self.dataset.schema.as_mut() {
            fix(s);
        }
        if let ModelSpec::Load { path } = &mut self.model {
            fix(path);
        }
        if let Some(o) = self.report.output.as_mut() {
            fix(o);
        }
    }

    /// Replaces every seed: the split, network initialization and random guessing.
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        if let ModelSpec::NeuralNet { params } = &mut self.model {
            params.seed = seed;
        }
        for a in &mut self.attacks {
            if let AttackSpec::Random { seed: s, .. } = &mut a.spec {
                *s = seed;
            }
        }
    }

    /// Checks referenced files and that every attack's knowledge matches the
    /// capabilities it needs.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !self.dataset.path.is_file() {
            return Err(config_error(format!(
                "dataset {} does not exist",
                self.dataset.path.display()
            )));
        }
        match (&self.dataset.schema, self.dataset.preprocessing) {
            (Some(s), _) if !s.is_file() => {
                return Err(config_error(format!(
                    "schema {} does not exist",
                    s.display()
                )));
            }
            (None, Preprocessing::Gss | Preprocessing::None) => {
                return Err(config_error(
                    "dataset schema is required unless preprocessing is adult",
                ));
            }
            _ => {}
        }
        if self.dataset.n_a == 0 {
            return Err(config_error("n_a must be positive"));
        }
        if let ModelSpec::Load { path } = &self.model {
            if !path.is_file() {
                return Err(config_error(format!(
                    "model {} does not exist",
                    path.display()
                )));
            }
        }
        if self.attacks.is_empty() && self.partial_sweep.is_none() {
            return Err(config_error("no attacks configured"));
        }
        for entry in &self.attacks {
            let need = entry.spec.requirements();
            let have = entry.flags();
            let name = entry.spec.name();
            let missing: Vec<&str> = [
                (
                    need.priors && !have.priors,
                    "marginal priors of the sensitive attribute",
                ),
                (
                    need.confusion && !have.confusion,
                    "the target model's confusion matrix",
                ),
                (
                    need.adversary_set && !have.adversary_set,
                    "the adversary dataset DS_A",
                ),
            ]
            .into_iter()
            .filter_map(|(m, what)| m.then_some(what))
            .collect();
            if !missing.is_empty() {
                return Err(config_error(format!(
                    "{name} requires adversary knowledge of {} (attack capability table)",
                    missing.join(" and ")
                )));
            }
            match &entry.spec {
                AttackSpec::Random { p_positive, .. } if !(0.0..=1.0).contains(p_positive) => {
                    return Err(config_error(format!(
                        "random: probability {p_positive} outside [0, 1]"
                    )));
                }
                AttackSpec::CsmiaPartial { unknown } if unknown.len() > 2 => {
                    return Err(config_error(
                        "csmia-partial supports at most two unknown attributes",
                    ));
                }
                _ => {}
            }
        }
        if let Some(g) = &self.report.grouping {
            if g != "education" {
                return Err(config_error(format!("unknown grouping '{g}'")));
            }
        }
        Ok(())
    }
}
