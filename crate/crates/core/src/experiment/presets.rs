use std::path::Path;

use super::config::{
    AttackEntry, DatasetSpec, ExperimentConfig, ModelSpec, OracleSpec, PartialSweep, Preprocessing,
    ReportSpec,
};
use super::ExperimentError;
use crate::attacks::{default_bank_params, AttackSpec};

pub const PRESETS: [&str; 5] = ["gss-dt", "gss-nn", "adult-dt", "adult-nn", "adult-partial"];

pub const GSS_N_A: usize = 5_079;
pub const ADULT_N_A: usize = 10_000;
pub const DEFAULT_SEED: u64 = 7;

/// The comparison attacks, in reporting order.
fn comparison_attacks() -> Vec<AttackEntry> {
    vec![
        AttackEntry::new(AttackSpec::Naive),
        AttackEntry::new(AttackSpec::Random {
            p_positive: 0.5,
            seed: DEFAULT_SEED,
        }),
        AttackEntry::new(AttackSpec::Fjrmia),
        AttackEntry::new(AttackSpec::Cmmia {
            params: default_bank_params(),
        }),
        AttackEntry::new(AttackSpec::Csmia),
    ]
}

fn gss(data_dir: &Path) -> DatasetSpec {
    DatasetSpec {
        path: data_dir.join("gss").join("gss.csv"),
        schema: Some(data_dir.join("gss").join("schema.json")),
        preprocessing: Preprocessing::Gss,
        n_a: GSS_N_A,
        seed: DEFAULT_SEED,
    }
}

fn adult(data_dir: &Path) -> DatasetSpec {
    DatasetSpec {
        path: data_dir.join("adult").join("adult.csv"),
        schema: None,
        preprocessing: Preprocessing::Adult,
        n_a: ADULT_N_A,
        seed: DEFAULT_SEED,
    }
}

fn tree() -> ModelSpec {
    ModelSpec::DecisionTree {
        params: Default::default(),
    }
}

fn net() -> ModelSpec {
    ModelSpec::NeuralNet {
        params: crate::models::NetParams {
            seed: DEFAULT_SEED,
            ..Default::default()
        },
    }
}

/// Experiment configuration for a named preset, reading data from `data_dir`.
pub fn preset(name: &str, data_dir: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let (dataset, model, grouping) = match name {
        "gss-dt" => (gss(data_dir), tree(), None),
        "gss-nn" => (gss(data_dir), net(), None),
        "adult-dt" | "adult-partial" => (adult(data_dir), tree(), Some("education".to_string())),
        "adult-nn" => (adult(data_dir), net(), Some("education".to_string())),
        other => {
            return Err(ExperimentError::Config(format!(
                "unknown preset '{other}' (available: {})",
                PRESETS.join(", ")
            )))
        }
    };
    let (attacks, partial_sweep) = if name == "adult-partial" {
        let pairs = ["capital-gain", "hours-per-week", "capital-loss"]
            .map(|other| ["occupation".to_string(), other.to_string()])
            .to_vec();
        (
            vec![AttackEntry::new(AttackSpec::Csmia)],
            Some(PartialSweep { pairs }),
        )
    } else {
        (comparison_attacks(), None)
    };
    Ok(ExperimentConfig {
        name: name.to_string(),
        dataset,
        model,
        oracle: OracleSpec::default(),
        attacks,
        partial_sweep,
        report: ReportSpec {
            output: None,
            grouping,
            per_class: true,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_build() {
        for p in PRESETS {
            let c = preset(p, Path::new("/data")).unwrap();
            assert_eq!(c.name, p);
            let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
            assert_eq!(back, c);
        }
        assert!(preset("nope", Path::new("/data")).is_err());
    }

    #[test]
    fn comparison_order() {
        let c = preset("gss-dt", Path::new("/d")).unwrap();
        let names: Vec<_> = c.attacks.iter().map(|a| a.spec.name()).collect();
        assert_eq!(names, ["naive", "random", "fjrmia", "cmmia", "csmia"]);
        assert_eq!(c.dataset.n_a, 5079);
    }

    #[test]
    fn partial_preset_names_the_combinations() {
        let c = preset("adult-partial", Path::new("/d")).unwrap();
        let pairs = c.partial_sweep.unwrap().pairs;
        assert_eq!(pairs.len(), 3);
        assert!(pairs.iter().all(|p| p[0] == "occupation"));
    }
}
