use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use miai_core::attacks::{default_bank_params, AttackSpec};
use miai_core::experiment::{
    self, AttackEntry, DatasetSpec, ExperimentConfig, KnowledgeFlags, ModelSpec, OracleSpec,
    Preprocessing, ReportSpec,
};
use miai_core::models::TreeParams;
use miai_core::oracle::serve;

fn gss_schema() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/gss/schema.json")
}

/// A synthetic survey extract in the shipped GSS column mapping, mixing
/// label spellings, numeric codes and missing-value tokens.
fn write_survey(dir: &Path, rows: usize) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut text =
        String::from("year,age,sex,race,educ,relig,divorce,childs,pornlaw,xmovie,hapmar\n");
    for _ in 0..rows {
        let age = rng.gen_range(18..90);
        let xmovie = rng.gen_bool(if age < 40 { 0.35 } else { 0.12 });
        let pornlaw = if xmovie {
            rng.gen_range(2..4)
        } else {
            rng.gen_range(1..4)
        };
        let happy = match (xmovie, rng.gen_range(0..10)) {
            (_, 0) => "not too happy",
            (true, 1..=5) | (false, 1..=3) => "pretty happy",
            _ => "very happy",
        };
        let xmovie = match rng.gen_range(0..20) {
            0 => "IAP",
            1..=9 => {
                if xmovie {
                    "yes"
                } else {
                    "no"
                }
            }
            _ => {
                if xmovie {
                    "1"
                } else {
                    "2"
                }
            }
        };
        writeln!(
            text,
            "{},{age},{},{},{},{},{},{},{pornlaw},{xmovie},{happy}",
            rng.gen_range(1972..=2018),
            ["male", "female", "1", "2"][rng.gen_range(0..4)],
            ["white", "black", "other"][rng.gen_range(0..3)],
            rng.gen_range(0..=20),
            [
                "protestant",
                "catholic",
                "jewish",
                "none",
                "other",
                "christian",
                "DK"
            ][rng.gen_range(0..7)],
            ["yes", "no", "NA"][rng.gen_range(0..3)],
            rng.gen_range(0..=8),
        )
        .unwrap();
    }
    let path = dir.join("gss.csv");
    fs::write(&path, text).unwrap();
    path
}

fn config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        name: "survey".into(),
        dataset: DatasetSpec {
            path: write_survey(dir, 1500),
            schema: Some(gss_schema()),
            preprocessing: Preprocessing::Gss,
            n_a: 300,
            seed: 3,
        },
        model: ModelSpec::DecisionTree {
            params: TreeParams {
                max_depth: 6,
                min_leaf: 5,
            },
        },
        oracle: OracleSpec::default(),
        attacks: vec![
            AttackEntry::new(AttackSpec::Naive),
            AttackEntry::new(AttackSpec::Random {
                p_positive: 0.5,
                seed: 3,
            }),
            AttackEntry::new(AttackSpec::Fjrmia),
            AttackEntry::new(AttackSpec::Cmmia {
                params: default_bank_params(),
            }),
            AttackEntry::new(AttackSpec::Csmia),
            AttackEntry::new(AttackSpec::CsmiaPartial {
                unknown: vec!["sex".into()],
            }),
        ],
        partial_sweep: None,
        report: ReportSpec {
            output: None,
            grouping: None,
            per_class: true,
        },
    }
}

#[test]
fn shipped_gss_mapping_has_eleven_attributes() {
    let schema = miai_core::dataset::Schema::load(&gss_schema()).unwrap();
    assert_eq!(schema.len(), 11);
    assert_eq!(schema.sensitive().name, "xmovie");
    assert_eq!(schema.target().name, "hapmar");
}

#[test]
fn survey_pipeline_runs_every_attack() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = experiment::run(&config(dir.path())).unwrap();
    let r = &outcome.report;
    assert_eq!(r.dataset.n_a, 300);
    assert_eq!(r.dataset.sensitive_domain, ["no", "yes"]);
    assert_eq!(r.dataset.target_domain.len(), 3);
    let n_t = r.dataset.n_t as u64;
    let queries: Vec<u64> = r.attacks.iter().map(|a| a.queries).collect();
    assert_eq!(
        queries,
        [0, 0, 2 * n_t, 2 * (300 + n_t), 2 * n_t, 2 * 2 * n_t]
    );
    for a in &r.attacks {
        assert_eq!(a.report.counts.total(), n_t);
        let per_class = a.per_class.as_ref().unwrap();
        let total: u64 = per_class.values().map(|c| c.counts.total()).sum();
        assert_eq!(total, n_t);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path());
    let a = experiment::run(&c).unwrap();
    let b = experiment::run(&c).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    experiment::write_outputs(&a, &dir.path().join("one")).unwrap();
    experiment::write_outputs(&b, &dir.path().join("two")).unwrap();
    for file in [
        "report.json",
        "comparison.csv",
        "plot_attacks.csv",
        "predictions/csmia.csv",
    ] {
        let x = fs::read(dir.path().join("one").join(file)).unwrap();
        let y = fs::read(dir.path().join("two").join(file)).unwrap();
        assert_eq!(x, y, "{file}");
    }
}

#[test]
fn comparison_rows_match_standalone_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    let all = experiment::run(&c).unwrap();
    c.attacks.retain(|a| a.spec == AttackSpec::Csmia);
    let alone = experiment::run(&c).unwrap();
    assert_eq!(
        all.report.attack("csmia").unwrap().report,
        alone.report.attack("csmia").unwrap().report
    );
}

#[test]
fn remote_oracle_gives_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.attacks
        .retain(|a| matches!(a.spec, AttackSpec::Csmia | AttackSpec::Fjrmia));
    let local = experiment::run(&c).unwrap();
    let prepared = experiment::prepare(&c.dataset).unwrap();
    let model = experiment::train(&c.model, &prepared.ds_t).unwrap();
    let server = serve(std::sync::Arc::new(model), "127.0.0.1:0", false).unwrap();
    c.oracle.endpoint = Some(server.url());
    let remote = experiment::run(&c).unwrap();
    for label in ["csmia", "fjrmia"] {
        assert_eq!(
            local.report.attack(label).unwrap().report,
            remote.report.attack(label).unwrap().report
        );
    }
}

#[test]
fn missing_knowledge_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.attacks = vec![AttackEntry {
        spec: AttackSpec::Cmmia {
            params: default_bank_params(),
        },
        knowledge: Some(KnowledgeFlags {
            adversary_set: false,
            ..Default::default()
        }),
    }];
    let err = experiment::run(&c).err().unwrap().to_string();
    assert!(err.contains("adversary dataset"), "{err}");
}

#[test]
fn failed_runs_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path());
    c.attacks = vec![AttackEntry::new(AttackSpec::CsmiaPartial {
        unknown: vec!["nope".into()],
    })];
    assert!(experiment::run(&c).is_err());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}
