use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use miai_core::attacks::{
    default_bank_params, AttackPrediction, AttackSpec, Knowledge, TargetRecord,
};
use miai_core::dataset::{self, Dataset, Schema};
use miai_core::experiment::{
    self, predictions_csv, preset, DatasetSpec, ExperimentConfig, ExperimentReport, Preprocessing,
    PRESETS,
};
use miai_core::metrics::{
    self, group_analysis, per_class_breakdown, score, EvaluationReport, Grouping, Truth,
};
use miai_core::models::{
    confusion_matrix, train_decision_tree, train_neural_net, ConfusionMatrix, NetParams,
    TargetModel, TreeParams,
};
use miai_core::oracle::{serve, HttpBackend, Oracle};

#[derive(Parser)]
#[command(
    name = "miai",
    version,
    about = "Model inversion attribute inference experiments"
)]
struct Cli {
    /// Directory holding `adult/adult.csv` and `gss/{gss.csv,schema.json}`.
    #[arg(long, global = true, env = "MIAI_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,

    /// Overrides every seed (split, network initialization, random guessing).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess a dataset and write the adversary/target split.
    PrepareData(PrepareArgs),
    /// Train a target model on a prepared DS_T.
    TrainTarget(TrainArgs),
    /// Serve a saved model over HTTP.
    Serve(ServeArgs),
    /// Run one attack and write its predictions.
    Attack(AttackArgs),
    /// Score saved predictions against the targets' true sensitive values.
    Evaluate(EvaluateArgs),
    /// Print the comparison table of a finished run.
    Report(ReportArgs),
    /// Run a full experiment from a preset or a config file.
    Run(RunArgs),
    /// Print a decision tree's attribute importance.
    Importance(ImportanceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Adult,
    Gss,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long, value_enum)]
    dataset: DatasetKind,
    /// Raw CSV; defaults to the file under the data directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Raw schema; required for GSS unless present under the data directory.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Size of DS_A; defaults to 10,000 (Adult) or 5,079 (GSS).
    #[arg(long)]
    n_a: Option<usize>,
    #[arg(long, default_value = "prepared")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    DecisionTree,
    NeuralNet,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `prepare-data`.
    #[arg(long, default_value = "prepared")]
    prepared: PathBuf,
    #[arg(long, value_enum, default_value = "decision-tree")]
    family: Family,
    #[arg(long, default_value_t = TreeParams::default().max_depth)]
    max_depth: usize,
    #[arg(long, default_value_t = TreeParams::default().min_leaf)]
    min_leaf: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,32")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = NetParams::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = NetParams::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Include the full score vector in responses.
    #[arg(long)]
    expose_scores: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackName {
    Naive,
    Random,
    Fjrmia,
    Csmia,
    Cmmia,
    CsmiaPartial,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum)]
    attack: AttackName,
    #[arg(long, default_value = "prepared")]
    prepared: PathBuf,
    /// Local model to query.
    #[arg(long, conflicts_with = "endpoint")]
    model: Option<PathBuf>,
    /// Prediction server to query, e.g. http://127.0.0.1:8080.
    #[arg(long)]
    endpoint: Option<String>,
    /// Positive-class probability for random guessing.
    #[arg(long, default_value_t = 0.5)]
    p_positive: f64,
    /// Unknown non-sensitive attributes for csmia-partial, comma separated.
    #[arg(long, value_delimiter = ',')]
    unknown: Vec<String>,
    /// Answer repeated queries from a cache.
    #[arg(long)]
    cache: bool,
    /// Output path prefix; writes `<out>.csv` and `<out>.json`.
    #[arg(long, default_value = "predictions")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions JSON written by `attack`.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value = "prepared")]
    prepared: PathBuf,
    /// Built-in grouping for group analysis.
    #[arg(long)]
    grouping: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of `run`.
    #[arg(long)]
    run: PathBuf,
    /// Print CSV instead of an aligned table.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's, then `runs/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::PrepareData(a) => prepare_data(&cli, a),
        Command::TrainTarget(a) => train_target(&cli, a),
        Command::Serve(a) => serve_model(a),
        Command::Attack(a) => attack(&cli, a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::Run(a) => run(&cli, a),
        Command::Importance(a) => importance(a),
    }
}

const SCHEMA_FILE: &str = "schema.json";

fn load_prepared(dir: &Path, name: &str) -> Result<Dataset> {
    let schema = Schema::load(&dir.join(SCHEMA_FILE))
        .with_context(|| format!("loading {}", dir.display()))?;
    let path = dir.join(format!("{name}.csv"));
    dataset::load_csv(&path, Arc::new(schema))
        .with_context(|| format!("loading {}", path.display()))
}

fn prepare_data(cli: &Cli, a: &PrepareArgs) -> Result<()> {
    let (sub, preprocessing, n_a) = match a.dataset {
        DatasetKind::Adult => ("adult", Preprocessing::Adult, experiment::ADULT_N_A),
        DatasetKind::Gss => ("gss", Preprocessing::Gss, experiment::GSS_N_A),
    };
    let default_schema = cli.data_dir.join(sub).join(SCHEMA_FILE);
    let spec = DatasetSpec {
        path: a
            .input
            .clone()
            .unwrap_or_else(|| cli.data_dir.join(sub).join(format!("{sub}.csv"))),
        schema: a
            .schema
            .clone()
            .or_else(|| default_schema.is_file().then_some(default_schema)),
        preprocessing,
        n_a: a.n_a.unwrap_or(n_a),
        seed: cli.seed.unwrap_or(experiment::DEFAULT_SEED),
    };
    let p = experiment::prepare(&spec)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join(SCHEMA_FILE), p.full.schema().to_json())?;
    dataset::write_csv(&p.full, &a.out.join("full.csv"))?;
    dataset::write_csv(&p.ds_a, &a.out.join("ds_a.csv"))?;
    dataset::write_csv(&p.ds_t, &a.out.join("ds_t.csv"))?;
    let marginals = p.ds_t.sensitive_marginals();
    let domain = p.full.schema().sensitive().categories();
    println!(
        "records: {}  DS_A: {}  DS_T: {}  seed: {}",
        p.full.len(),
        p.ds_a.len(),
        p.ds_t.len(),
        spec.seed
    );
    for (v, f) in domain.iter().zip(marginals) {
        println!("  DS_T {v}: {}%", metrics::percent(f));
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn print_confusion(cm: &ConfusionMatrix) {
    println!(
        "confusion matrix (rows: actual, columns: predicted) {:?}",
        cm.labels
    );
    for (label, row) in cm.labels.iter().zip(&cm.counts) {
        println!("  {label:>16}: {row:?}");
    }
    println!("accuracy: {}%", metrics::percent(cm.accuracy()));
}

fn train_target(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let ds_t = load_prepared(&a.prepared, "ds_t")?;
    let model = match a.family {
        Family::DecisionTree => train_decision_tree(
            &ds_t,
            TreeParams {
                max_depth: a.max_depth,
                min_leaf: a.min_leaf,
            },
        )?,
        Family::NeuralNet => train_neural_net(
            &ds_t,
            &NetParams {
                hidden: a.hidden.clone(),
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                seed: cli.seed.unwrap_or(experiment::DEFAULT_SEED),
                ..NetParams::default()
            },
        )?,
    };
    model.save(&a.out)?;
    print_confusion(&confusion_matrix(&model, &ds_t)?);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn serve_model(a: &ServeArgs) -> Result<()> {
    let model = TargetModel::load(&a.model)?;
    let handle = serve(Arc::new(model), &a.bind, a.expose_scores)?;
    println!("serving {} on {}", a.model.display(), handle.url());
    handle.wait();
    Ok(())
}

fn attack(cli: &Cli, a: &AttackArgs) -> Result<()> {
    let ds_t = load_prepared(&a.prepared, "ds_t")?;
    let (oracle, local) = match (&a.model, &a.endpoint) {
        (Some(path), _) => {
            let model = Arc::new(TargetModel::load(path)?);
            (Oracle::local(model.clone()), Some(model))
        }
        (None, Some(url)) => (Oracle::new(HttpBackend::connect(url)?), None),
        (None, None) => bail!("--model or --endpoint is required"),
    };
    let oracle = oracle.with_cache(a.cache);
    if oracle.schema() != ds_t.schema() {
        bail!("oracle schema does not match the prepared data");
    }
    let seed = cli.seed.unwrap_or(experiment::DEFAULT_SEED);
    let spec = match a.attack {
        AttackName::Naive => AttackSpec::Naive,
        AttackName::Random => AttackSpec::Random {
            p_positive: a.p_positive,
            seed,
        },
        AttackName::Fjrmia => AttackSpec::Fjrmia,
        AttackName::Csmia => AttackSpec::Csmia,
        AttackName::Cmmia => AttackSpec::Cmmia {
            params: default_bank_params(),
        },
        AttackName::CsmiaPartial => AttackSpec::CsmiaPartial {
            unknown: a.unknown.clone(),
        },
    };
    let need = spec.requirements();
    let confusion = if need.confusion {
        Some(match &local {
            Some(m) => confusion_matrix(m, &ds_t)?,
            None => remote_confusion(&oracle, &ds_t)?,
        })
    } else {
        None
    };
    let knowledge = Knowledge {
        priors: need.priors.then(|| ds_t.sensitive_marginals()),
        confusion,
        adversary_set: if need.adversary_set {
            Some(load_prepared(&a.prepared, "ds_a")?)
        } else {
            None
        },
    };
    let targets = TargetRecord::from_dataset(&ds_t)?;
    oracle.ledger().start_run(&spec.label());
    let preds = spec.execute(&targets, &oracle, &knowledge)?;
    let csv_path = a.out.with_extension("csv");
    let json_path = a.out.with_extension("json");
    fs::write(&csv_path, predictions_csv(ds_t.schema(), &preds))?;
    fs::write(&json_path, serde_json::to_string(&preds)?)?;
    let ledger = oracle.ledger().snapshot();
    println!(
        "{}: {} records, {} queries for the attack ({} total, {} cache hits)",
        spec.label(),
        preds.len(),
        oracle.ledger().current_run(),
        ledger.total,
        ledger.cache_hits
    );
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn remote_confusion(oracle: &Oracle, ds_t: &Dataset) -> Result<ConfusionMatrix> {
    oracle.ledger().start_run("confusion-matrix");
    let m = oracle.labels().len();
    let t = ds_t.schema().target_index();
    let mut counts = vec![vec![0u64; m]; m];
    for r in ds_t.records() {
        let y = r.values[t].as_cat().context("target without label")?;
        counts[y][oracle.query(&r.values)?.label] += 1;
    }
    Ok(ConfusionMatrix::from_counts(
        oracle.labels().to_vec(),
        counts,
    ))
}

fn print_report(name: &str, r: &EvaluationReport) {
    let m = &r.metrics;
    let c = &r.counts;
    println!(
        "{name:<34} {:>7} {:>7} {:>7} {:>7} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8}",
        c.tp,
        c.tn,
        c.fp,
        c.fn_,
        metrics::percent(m.precision),
        metrics::percent(m.recall),
        metrics::percent(m.accuracy),
        metrics::percent(m.f1),
        metrics::percent(m.g_mean),
        metrics::percent(m.mcc),
    );
}

fn print_header() {
    println!(
        "{:<34} {:>7} {:>7} {:>7} {:>7} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "attack", "TP", "TN", "FP", "FN", "precision", "recall", "accuracy", "F1", "G-mean", "MCC"
    );
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let ds_t = load_prepared(&a.prepared, "ds_t")?;
    let preds: Vec<AttackPrediction> = serde_json::from_str(
        &fs::read_to_string(&a.predictions).with_context(|| a.predictions.display().to_string())?,
    )?;
    let schema = ds_t.schema();
    let positive = metrics::positive_class(schema)?;
    let truth = Truth::from_dataset(&ds_t);
    let mut report = score(&preds, &truth, positive)?;
    for (label, r) in per_class_breakdown(&preds, &truth, schema.target().categories(), positive)? {
        report.slices.insert(format!("class:{label}"), r);
    }
    if let Some(g) = &a.grouping {
        if g != "education" {
            bail!("unknown grouping '{g}'");
        }
        let grouping = Grouping::adult_education(&ds_t)?;
        for (name, r) in group_analysis(&preds, &truth, &grouping, positive)?.slices {
            report.slices.insert(format!("group:{name}"), r);
        }
    }
    print_header();
    print_report("all", &report);
    for (name, r) in &report.slices {
        print_report(name, r);
    }
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&report)?)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let path = a.run.join("report.json");
    let r: ExperimentReport = serde_json::from_str(
        &fs::read_to_string(&path).with_context(|| path.display().to_string())?,
    )?;
    if a.csv {
        print!("{}", r.comparison_csv());
        return Ok(());
    }
    print_summary(&r);
    Ok(())
}

fn print_summary(r: &ExperimentReport) {
    let d = &r.dataset;
    println!(
        "{}: {} records, DS_A {} / DS_T {} (split seed {}), sensitive '{}' (positive {}), target '{}'",
        r.name, d.records, d.n_a, d.n_t, d.split_seed, d.sensitive, d.positive, d.target
    );
    println!(
        "model: {}, accuracy on DS_T {}%",
        r.model.family,
        metrics::percent(r.model.train_accuracy)
    );
    print_header();
    for a in &r.attacks {
        print_report(&a.label, &a.report);
    }
    if let Some(groups) = &r.groups {
        println!();
        for (g, s) in groups {
            println!(
                "{g}: {} records, {}% {}",
                s.size,
                metrics::percent(s.positive_fraction),
                d.positive
            );
        }
        for a in &r.attacks {
            if let Some(gr) = &a.groups {
                for (g, rep) in &gr.slices {
                    print_report(&format!("{} {g}", a.label), rep);
                }
            }
        }
    }
    println!("queries: {}", r.ledger.total);
}

fn run(cli: &Cli, a: &RunArgs) -> Result<()> {
    let mut config = match (&a.preset, &a.config) {
        (Some(name), _) => preset(name, &cli.data_dir)
            .with_context(|| format!("available presets: {}", PRESETS.join(", ")))?,
        (None, Some(path)) => ExperimentConfig::load(path)?,
        (None, None) => bail!("--preset or --config is required"),
    };
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    let out = a
        .out
        .clone()
        .or_else(|| config.report.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&config.name));
    let outcome = experiment::run(&config)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    experiment::write_outputs(&outcome, &out)?;
    print_summary(&outcome.report);
    println!("wrote {}", out.display());
    Ok(())
}

fn importance(a: &ImportanceArgs) -> Result<()> {
    let model = TargetModel::load(&a.model)?;
    let mut imp = model.importance()?;
    imp.sort_by(|x, y| y.1.total_cmp(&x.1));
    for (name, v) in &imp {
        println!("{name:<20} {}%", metrics::percent(*v));
    }
    Ok(())
}
