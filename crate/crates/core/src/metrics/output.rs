use super::EvaluationReport;

pub const PLOT_METRICS: [&str; 6] = ["precision", "recall", "accuracy", "f1", "g_mean", "mcc"];

const HEADER: [&str; 12] = [
    "attack",
    "slice",
    "tp",
    "tn",
    "fp",
    "fn",
    "precision",
    "recall",
    "accuracy",
    "f1",
    "g_mean",
    "mcc",
];

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

fn flatten(out: &mut Vec<(String, EvaluationReport)>, path: &str, r: &EvaluationReport) {
    let mut own = r.clone();
    own.slices.clear();
    out.push((path.to_string(), own));
    for (name, s) in &r.slices {
        let child = if path.is_empty() {
            name.clone()
        } else {
            format!("{path}/{name}")
        };
        flatten(out, &child, s);
    }
}

/// One row per (attack, slice); the whole-set row has an empty slice.
/// Metrics are percentages with two decimals.
pub fn reports_csv(reports: &[(String, &EvaluationReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).unwrap();
    for (attack, report) in reports {
        let mut rows = Vec::new();
        flatten(&mut rows, "", report);
        for (slice, r) in rows {
            let c = r.counts;
            let mut row = vec![
                attack.clone(),
                slice,
                c.tp.to_string(),
                c.tn.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
            ];
            row.extend(
                PLOT_METRICS
                    .iter()
                    .map(|m| super::percent(r.metrics.get(m).unwrap())),
            );
            w.write_record(&row).unwrap();
        }
    }
    finish(w)
}

/// Long-format `attack,metric,value` rows for metric-versus-attack plots.
pub fn plot_by_attack(reports: &[(String, &EvaluationReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["attack", "metric", "value"]).unwrap();
    for (attack, r) in reports {
        for m in PLOT_METRICS {
            w.write_record([
                attack.as_str(),
                m,
                &super::percent(r.metrics.get(m).unwrap()),
            ])
            .unwrap();
        }
    }
    finish(w)
}

/// Long-format `attack,group,metric,value` rows from group-analysis reports.
pub fn plot_by_group(reports: &[(String, &EvaluationReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["attack", "group", "metric", "value"])
        .unwrap();
    for (attack, r) in reports {
        for (group, g) in &r.slices {
            for m in PLOT_METRICS {
                w.write_record([
                    attack.as_str(),
                    group,
                    m,
                    &super::percent(g.metrics.get(m).unwrap()),
                ])
                .unwrap();
            }
        }
    }
    finish(w)
}
