use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{ColumnKind, ColumnSchema};
use crate::error::{Error, Result};

/// String cells for the schema's columns, in schema order. `None` marks a
/// missing value.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "?" | "NA" | "N/A" | "NaN" | "nan" | "null")
}

pub(crate) fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let targets = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Target)
        .count();
    if targets != 1 {
        return Err(Error::Config(format!(
            "schema must have exactly one target column, found {targets}"
        )));
    }
    Ok(())
}

pub fn load_csv(path: &Path, schema: &[ColumnSchema], max_rows: Option<usize>) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_csv_from_reader(file, schema, max_rows).map_err(|e| match e {
        Error::Ingestion(msg) => Error::Ingestion(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads an RFC-4180 CSV with a header row. Columns the schema does not
/// name are ignored.
pub fn load_csv_from_reader<R: Read>(
    reader: R,
    schema: &[ColumnSchema],
    max_rows: Option<usize>,
) -> Result<RawTable> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Ingestion(format!("header: {e}")))?
        .clone();

    let mut positions = Vec::with_capacity(schema.len());
    for col in schema {
        let pos = headers
            .iter()
            .position(|h| h == col.name)
            .ok_or_else(|| Error::Ingestion(format!("unknown column '{}'", col.name)))?;
        positions.push(pos);
    }

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        if max_rows.is_some_and(|m| rows.len() >= m) {
            break;
        }
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| Error::Ingestion(format!("row {line}: {e}")))?;
        let row = positions
            .iter()
            .map(|&p| {
                let cell = record.get(p).unwrap_or("");
                (!is_missing(cell)).then(|| cell.to_string())
            })
            .collect();
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Ingestion("table has no data rows".into()));
    }
    Ok(RawTable {
        columns: schema.iter().map(|c| c.name.clone()).collect(),
        rows,
    })
}
