use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{display_value, Dataset, DatasetError, Kind, Provenance, Record, Schema, Value};

/// Optional leading column carrying record identities across files.
pub const ID_COLUMN: &str = "record_id";

/// Reads a headered CSV whose columns are exactly the schema's attributes (in any
/// order, optionally plus a `record_id` column). Rows are numbered from 1 in errors.
pub fn load_csv(path: &Path, schema: Arc<Schema>) -> Result<Dataset, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema)
}

pub(crate) fn read_csv<R: Read>(input: R, schema: Arc<Schema>) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers()?.clone();

    let mut id_column = None;
    let mut column_of = vec![None; schema.len()];
    for (pos, name) in header.iter().enumerate() {
        if name == ID_COLUMN {
            id_column = Some(pos);
            continue;
        }
        match schema.index_of(name) {
            Some(i) if column_of[i].is_none() => column_of[i] = Some(pos),
            Some(_) => {
                return Err(DatasetError::Header(format!(
                    "column '{name}' appears twice"
                )))
            }
            None => return Err(DatasetError::Header(format!("unexpected column '{name}'"))),
        }
    }
    let absent: Vec<String> = column_of
        .iter()
        .zip(&schema.attributes)
        .filter(|(c, _)| c.is_none())
        .map(|(_, a)| a.name.clone())
        .collect();
    if !absent.is_empty() {
        return Err(DatasetError::Header(format!(
            "missing columns {}",
            absent.join(", ")
        )));
    }

    let mut records = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = n + 1;
        let id = match id_column {
            Some(pos) => row[pos].parse::<usize>().map_err(|_| DatasetError::Cell {
                row: row_no,
                column: ID_COLUMN.into(),
                message: format!("invalid record id '{}'", &row[pos]),
            })?,
            None => n,
        };
        let mut values = Vec::with_capacity(schema.len());
        for (attr, pos) in schema.attributes.iter().zip(&column_of) {
            let cell = &row[pos.expect("checked above")];
            values.push(
                parse_cell(&schema, attr, cell).map_err(|message| DatasetError::Cell {
                    row: row_no,
                    column: attr.name.clone(),
                    message,
                })?,
            );
        }
        records.push(Record { id, values });
    }
    Ok(Dataset::new(schema, records, Provenance::Raw))
}

fn parse_cell(schema: &Schema, attr: &super::Attribute, cell: &str) -> Result<Value, String> {
    if schema.is_missing_token(cell) && attr.category_index(cell).is_none() {
        return Ok(Value::Missing);
    }
    match attr.kind {
        Kind::Categorical => attr
            .category_index(cell)
            .map(Value::Cat)
            .ok_or_else(|| format!("'{cell}' is not in the domain")),
        Kind::Numeric => {
            let v: f64 = cell
                .parse()
                .map_err(|_| format!("'{cell}' is not a number"))?;
            let (lo, hi) = attr.range().expect("numeric attribute");
            if !v.is_finite() || v < lo || v > hi {
                return Err(format!("{v} outside [{lo}, {hi}]"));
            }
            Ok(Value::Num(v))
        }
    }
}

/// Writes the dataset with a leading `record_id` column; missing cells use the
/// schema's first missing token.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv_to(dataset, file)
}

pub(crate) fn write_csv_to<W: Write>(dataset: &Dataset, out: W) -> Result<(), DatasetError> {
    let schema = dataset.schema();
    let missing = schema.missing_tokens.first().cloned().unwrap_or_default();
    let mut writer = csv::WriterBuilder::new().from_writer(out);
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(schema.attributes.iter().map(|a| a.name.clone()));
    writer.write_record(&header)?;
    for record in dataset.records() {
        let mut row = vec![record.id.to_string()];
        for (attr, value) in schema.attributes.iter().zip(&record.values) {
            row.push(match value {
                Value::Missing => missing.clone(),
                v => display_value(attr, *v),
            });
        }
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|source| DatasetError::Io {
        path: "<csv output>".into(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::testing::toy_schema;
    use super::*;

    #[test]
    fn loads_matching_rows() {
        let text = "color,size,secret,label\nred,1,no,a\ngreen,2.5,yes,b\nblue,3,no,a\n";
        let d = read_csv(text.as_bytes(), toy_schema()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.records()[1].values[1], Value::Num(2.5));
        assert_eq!(d.records()[2].id, 2);
    }

    #[test]
    fn column_order_is_free() {
        let text = "label,secret,size,color\na,no,1,red\n";
        let d = read_csv(text.as_bytes(), toy_schema()).unwrap();
        assert_eq!(d.records()[0].values[0], Value::Cat(0));
    }

    #[test]
    fn out_of_domain_category_names_row_and_column() {
        let text = "color,size,secret,label\nred,1,no,a\nred,1,no,abc\n";
        let err = read_csv(text.as_bytes(), toy_schema()).unwrap_err();
        match err {
            DatasetError::Cell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "label");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unparseable_number_is_reported() {
        let text = "color,size,secret,label\nred,big,no,a\n";
        let err = read_csv(text.as_bytes(), toy_schema()).unwrap_err();
        assert!(err.to_string().contains("row 1, column 'size'"), "{err}");
    }

    #[test]
    fn header_mismatch() {
        let text = "colour,size,secret,label\nred,1,no,a\n";
        assert!(matches!(
            read_csv(text.as_bytes(), toy_schema()),
            Err(DatasetError::Header(_))
        ));
    }

    #[test]
    fn missing_token_becomes_missing() {
        let text = "color,size,secret,label\n?,1,no,a\n";
        let d = read_csv(text.as_bytes(), toy_schema()).unwrap();
        assert!(d.records()[0].values[0].is_missing());
    }

    #[test]
    fn missing_file() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), toy_schema()).unwrap_err();
        assert!(matches!(err, DatasetError::Io { .. }));
    }

    #[test]
    fn write_then_read_keeps_ids() {
        let text = "color,size,secret,label\nred,1,no,a\n?,2.5,yes,b\n";
        let d = read_csv(text.as_bytes(), toy_schema()).unwrap();
        let sub = d.select(&[1], Provenance::TargetSet);
        let mut buf = Vec::new();
        write_csv_to(&sub, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), toy_schema()).unwrap();
        assert_eq!(back.records(), sub.records());
    }
}
