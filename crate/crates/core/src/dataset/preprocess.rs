//! Dataset presets: Adult (Census Income) and the GSS marital-happiness extract.

use std::sync::Arc;

use super::{Attribute, Dataset, DatasetError, Kind, Provenance, Record, Role, Schema, Value};

pub const ADULT_MARRIED: &str = "Married";
pub const ADULT_SINGLE: &str = "Single";

const ADULT_MARITAL: &str = "marital-status";
const ADULT_RELATIONSHIP: &str = "relationship";
const ADULT_INCOME: &str = "income";

const MARRIED_STATUSES: [&str; 3] = [
    "Married-civ-spouse",
    "Married-spouse-absent",
    "Married-AF-spouse",
];
const SINGLE_STATUSES: [&str; 4] = ["Divorced", "Never-married", "Separated", "Widowed"];

const GSS_SENSITIVE: &str = "xmovie";
const GSS_TARGET: &str = "hapmar";
const GSS_SENSITIVE_DOMAIN: [&str; 2] = ["no", "yes"];
const GSS_TARGET_DOMAIN: [&str; 3] = ["not too happy", "pretty happy", "very happy"];

/// Number of probe values kept for a numeric attribute (deciles, deduplicated).
const PROBE_QUANTILES: usize = 10;

/// Schema of the raw UCI Adult export (48,842 rows across the train and test files).
pub fn adult_raw_schema() -> Schema {
    use Role::*;
    let attrs = vec![
        Attribute::numeric("age", 17.0, 90.0, Feature),
        Attribute::categorical(
            "workclass",
            &[
                "Federal-gov",
                "Local-gov",
                "Never-worked",
                "Private",
                "Self-emp-inc",
                "Self-emp-not-inc",
                "State-gov",
                "Without-pay",
            ],
            Feature,
        ),
        Attribute::numeric("fnlwgt", 12285.0, 1490400.0, Feature),
        Attribute::categorical(
            "education",
            &[
                "Preschool",
                "1st-4th",
                "5th-6th",
                "7th-8th",
                "9th",
                "10th",
                "11th",
                "12th",
                "HS-grad",
                "Some-college",
                "Assoc-voc",
                "Assoc-acdm",
                "Bachelors",
                "Masters",
                "Prof-school",
                "Doctorate",
            ],
            Feature,
        ),
        Attribute::numeric("education-num", 1.0, 16.0, Feature),
        Attribute::categorical(
            ADULT_MARITAL,
            &[
                "Divorced",
                "Married-AF-spouse",
                "Married-civ-spouse",
                "Married-spouse-absent",
                "Never-married",
                "Separated",
                "Widowed",
            ],
            Sensitive,
        ),
        Attribute::categorical(
            "occupation",
            &[
                "Adm-clerical",
                "Armed-Forces",
                "Craft-repair",
                "Exec-managerial",
                "Farming-fishing",
                "Handlers-cleaners",
                "Machine-op-inspct",
                "Other-service",
                "Priv-house-serv",
                "Prof-specialty",
                "Protective-serv",
                "Sales",
                "Tech-support",
                "Transport-moving",
            ],
            Feature,
        ),
        Attribute::categorical(
            ADULT_RELATIONSHIP,
            &[
                "Husband",
                "Not-in-family",
                "Other-relative",
                "Own-child",
                "Unmarried",
                "Wife",
            ],
            Feature,
        ),
        Attribute::categorical(
            "race",
            &[
                "Amer-Indian-Eskimo",
                "Asian-Pac-Islander",
                "Black",
                "Other",
                "White",
            ],
            Feature,
        ),
        Attribute::categorical("sex", &["Female", "Male"], Feature),
        Attribute::numeric("capital-gain", 0.0, 99999.0, Feature),
        Attribute::numeric("capital-loss", 0.0, 4356.0, Feature),
        Attribute::numeric("hours-per-week", 1.0, 99.0, Feature),
        Attribute::categorical(
            "native-country",
            &[
                "Cambodia",
                "Canada",
                "China",
                "Columbia",
                "Cuba",
                "Dominican-Republic",
                "Ecuador",
                "El-Salvador",
                "England",
                "France",
                "Germany",
                "Greece",
                "Guatemala",
                "Haiti",
                "Holand-Netherlands",
                "Honduras",
                "Hong",
                "Hungary",
                "India",
                "Iran",
                "Ireland",
                "Italy",
                "Jamaica",
                "Japan",
                "Laos",
                "Mexico",
                "Nicaragua",
                "Outlying-US(Guam-USVI-etc)",
                "Peru",
                "Philippines",
                "Poland",
                "Portugal",
                "Puerto-Rico",
                "Scotland",
                "South",
                "Taiwan",
                "Thailand",
                "Trinadad&Tobago",
                "United-States",
                "Vietnam",
                "Yugoslavia",
            ],
            Feature,
        ),
        Attribute::categorical(ADULT_INCOME, &["<=50K", ">50K"], TargetLabel),
    ];
    Schema::new(attrs, &["?"]).expect("built-in schema is valid")
}

fn require(schema: &Schema, names: &[&str]) -> Result<(), DatasetError> {
    let absent: Vec<String> = names
        .iter()
        .filter(|n| schema.index_of(n).is_none())
        .map(|n| n.to_string())
        .collect();
    if absent.is_empty() {
        Ok(())
    } else {
        Err(DatasetError::MissingColumns(absent))
    }
}

/// Replaces a categorical column by a coarser one. `map` sends each old category
/// name to a new category name, or `None` when the value is unusable.
fn remap_column(
    schema: &Schema,
    records: &mut [Record],
    index: usize,
    new_attr: Attribute,
    map: impl Fn(&str) -> Option<String>,
) -> Attribute {
    let old = &schema.attributes[index];
    let lookup: Vec<Value> = old
        .categories()
        .iter()
        .map(|name| {
            map(name)
                .and_then(|n| new_attr.category_index(&n))
                .map(Value::Cat)
                .unwrap_or(Value::Missing)
        })
        .collect();
    for r in records.iter_mut() {
        if let Value::Cat(i) = r.values[index] {
            r.values[index] = lookup[i as usize];
        }
    }
    new_attr
}

fn drop_incomplete(schema: &Schema, records: Vec<Record>) -> Vec<Record> {
    let live: Vec<usize> = (0..schema.len())
        .filter(|&i| schema.attributes[i].role != Role::Dropped)
        .collect();
    records
        .into_iter()
        .filter(|r| live.iter().all(|&i| !r.values[i].is_missing()))
        .enumerate()
        .map(|(id, r)| Record {
            id,
            values: r.values,
        })
        .collect()
}

/// Deciles of the observed values, deduplicated and sorted.
fn numeric_probes(records: &[Record], index: usize) -> Vec<f64> {
    let mut values: Vec<f64> = records
        .iter()
        .filter_map(|r| r.values[index].as_num())
        .collect();
    if values.is_empty() {
        return Vec::new();
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mut probes: Vec<f64> = (0..=PROBE_QUANTILES)
        .map(|q| {
            let pos = (q * (values.len() - 1)) as f64 / PROBE_QUANTILES as f64;
            values[pos.round() as usize]
        })
        .collect();
    probes.dedup();
    probes
}

fn attach_probes(schema: &mut Schema, records: &[Record]) {
    for i in 0..schema.len() {
        let attr = &schema.attributes[i];
        if attr.kind == Kind::Numeric && attr.role == Role::Feature {
            schema.attributes[i].probes = Some(numeric_probes(records, i));
        }
    }
}

/// Adult preprocessing: marital status collapses to Married/Single (the sensitive
/// attribute), `relationship` is dropped, rows with missing values are removed.
/// Record ids are renumbered to row positions in the result.
pub fn preprocess_adult(raw: &Dataset) -> Result<Dataset, DatasetError> {
    let schema = raw.schema();
    require(schema, &[ADULT_MARITAL, ADULT_RELATIONSHIP, ADULT_INCOME])?;
    let marital = schema.index_of(ADULT_MARITAL).unwrap();
    let relationship = schema.index_of(ADULT_RELATIONSHIP).unwrap();
    let income = schema.index_of(ADULT_INCOME).unwrap();

    let mut new_schema = schema.clone();
    for attr in new_schema.attributes.iter_mut() {
        if attr.role == Role::Sensitive || attr.role == Role::TargetLabel {
            attr.role = Role::Feature;
        }
    }
    new_schema.attributes[relationship].role = Role::Dropped;
    new_schema.attributes[income].role = Role::TargetLabel;

    let mut married = Attribute::categorical(
        ADULT_MARITAL,
        &[ADULT_SINGLE, ADULT_MARRIED],
        Role::Sensitive,
    )
    .with_positive(ADULT_MARRIED);
    for s in MARRIED_STATUSES {
        married.aliases.insert(s.into(), ADULT_MARRIED.into());
    }
    for s in SINGLE_STATUSES {
        married.aliases.insert(s.into(), ADULT_SINGLE.into());
    }

    let mut records = raw.records().to_vec();
    let cluster = married.clone();
    new_schema.attributes[marital] = remap_column(schema, &mut records, marital, married, |name| {
        cluster
            .category_index(name)
            .map(|i| cluster.categories()[i as usize].clone())
    });

    let records = drop_incomplete(&new_schema, records);
    attach_probes(&mut new_schema, &records);
    new_schema.validate()?;
    Ok(Dataset::new(
        Arc::new(new_schema),
        records,
        Provenance::Preprocessed,
    ))
}

/// GSS preprocessing: drops records missing the x-rated-movie answer or the
/// marital-happiness label (and any other incomplete record), normalizes both
/// domains and renumbers record ids.
pub fn preprocess_gss(raw: &Dataset) -> Result<Dataset, DatasetError> {
    let schema = raw.schema();
    require(schema, &[GSS_SENSITIVE, GSS_TARGET])?;
    let sensitive = schema.index_of(GSS_SENSITIVE).unwrap();
    let target = schema.index_of(GSS_TARGET).unwrap();

    let mut new_schema = schema.clone();
    for attr in new_schema.attributes.iter_mut() {
        if attr.role == Role::Sensitive || attr.role == Role::TargetLabel {
            attr.role = Role::Feature;
        }
    }
    let mut records = raw.records().to_vec();

    let mut xmovie = Attribute::categorical(GSS_SENSITIVE, &GSS_SENSITIVE_DOMAIN, Role::Sensitive)
        .with_positive("yes");
    xmovie.aliases = schema.attributes[sensitive].aliases.clone();
    xmovie
        .aliases
        .retain(|_, v| GSS_SENSITIVE_DOMAIN.contains(&v.as_str()));
    new_schema.attributes[sensitive] =
        remap_column(schema, &mut records, sensitive, xmovie, |name| {
            Some(name.to_lowercase())
        });

    let mut hapmar = Attribute::categorical(GSS_TARGET, &GSS_TARGET_DOMAIN, Role::TargetLabel);
    hapmar.aliases = schema.attributes[target].aliases.clone();
    hapmar
        .aliases
        .retain(|_, v| GSS_TARGET_DOMAIN.contains(&v.as_str()));
    new_schema.attributes[target] = remap_column(schema, &mut records, target, hapmar, |name| {
        Some(name.to_lowercase())
    });

    let records = drop_incomplete(&new_schema, records);
    attach_probes(&mut new_schema, &records);
    new_schema.validate()?;
    Ok(Dataset::new(
        Arc::new(new_schema),
        records,
        Provenance::Preprocessed,
    ))
}
