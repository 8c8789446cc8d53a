//! Cells, rows, datasets, and CSV ingestion.
//!
//! Cells remember how their raw text parsed (integer vs float) because the
//! serializer renders the two differently: `53` stays `53`, `583.0` stays
//! `583.0`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::{ColumnKind, ColumnSpec, DatasetSchema};

/// One table cell. `Int` and `Float` are both numeric; the split only drives
/// rendering (no decimal point vs a preserved decimal point).
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Category(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    /// Numeric view of the cell, if it has one.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }

    /// Render the cell the way prompts print values: integers bare, floats
    /// with their shortest round-trip form plus a guaranteed decimal point,
    /// category codes verbatim. Missing cells have no rendering.
    pub fn render(&self) -> Option<String> {
        match self {
            Cell::Int(v) => Some(v.to_string()),
            Cell::Float(v) => {
                let mut s = v.to_string();
                if !s.contains('.') && !s.contains('e') && !s.contains('E') {
                    s.push_str(".0");
                }
                Some(s)
            }
            Cell::Category(code) => Some(code.clone()),
            Cell::Missing => None,
        }
    }
}

/// A single data row: column name → cell. Absent keys read as missing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Row {
    pub cells: BTreeMap<String, Cell>,
}

impl Row {
    pub fn new() -> Self {
        Row::default()
    }

    pub fn get(&self, column: &str) -> &Cell {
        self.cells.get(column).unwrap_or(&Cell::Missing)
    }

    pub fn set(&mut self, column: impl Into<String>, cell: Cell) {
        self.cells.insert(column.into(), cell);
    }

    /// Copy of the row with the named column removed (used to strip labels).
    pub fn without(&self, column: &str) -> Row {
        let mut row = self.clone();
        row.cells.remove(column);
        row
    }

    /// The class token stored in the target column, if any.
    pub fn class_token(&self, target: &str) -> Option<&str> {
        match self.get(target) {
            Cell::Category(code) => Some(code.as_str()),
            _ => None,
        }
    }
}

/// Options for CSV ingestion.
#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Field values treated as missing after trimming (empty is always
    /// missing). OpenML exports conventionally use "?".
    pub missing_sentinels: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            missing_sentinels: vec!["?".to_string()],
        }
    }
}

/// A schema plus its rows.
#[derive(Clone, Debug)]
pub struct TableDataset {
    pub schema: DatasetSchema,
    pub rows: Vec<Row>,
    /// Source identifier, e.g. the dataset name (CSV file stem by default).
    pub provenance: String,
}

impl TableDataset {
    /// Construct and validate a dataset from parts.
    pub fn new(schema: DatasetSchema, rows: Vec<Row>, provenance: impl Into<String>) -> Result<Self> {
        schema.validate()?;
        let ds = TableDataset {
            schema,
            rows,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Check every row against the schema.
    pub fn validate(&self) -> Result<()> {
        for (idx, row) in self.rows.iter().enumerate() {
            for (name, cell) in &row.cells {
                if cell.is_missing() {
                    continue;
                }
                let spec = self.schema.column(name).ok_or_else(|| {
                    Error::SchemaMismatch(format!("row {idx}: unknown column {name:?}"))
                })?;
                validate_cell(cell, spec, idx)?;
            }
        }
        Ok(())
    }
}

fn validate_cell(cell: &Cell, spec: &ColumnSpec, row_idx: usize) -> Result<()> {
    match (spec.kind, cell) {
        (ColumnKind::Numeric, Cell::Int(_)) => Ok(()),
        (ColumnKind::Numeric, Cell::Float(v)) => {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::SchemaMismatch(format!(
                    "row {row_idx}: non-finite value in numeric column {:?}",
                    spec.name
                )))
            }
        }
        (ColumnKind::Categorical, Cell::Category(code)) => {
            if spec.admissible_codes().contains(&code.as_str()) {
                Ok(())
            } else {
                Err(Error::SchemaMismatch(format!(
                    "row {row_idx}: code {code:?} is not admissible for column {:?}",
                    spec.name
                )))
            }
        }
        _ => Err(Error::SchemaMismatch(format!(
            "row {row_idx}: cell kind does not match column {:?}",
            spec.name
        ))),
    }
}

/// Parse one raw CSV field into a cell according to its column spec.
pub fn parse_cell(
    raw: &str,
    spec: &ColumnSpec,
    row_idx: usize,
    options: &LoadOptions,
) -> Result<Cell> {
    let trimmed = raw.trim();
    if trimmed.is_empty() || options.missing_sentinels.iter().any(|s| s == trimmed) {
        return Ok(Cell::Missing);
    }
    match spec.kind {
        ColumnKind::Numeric => {
            if let Ok(v) = trimmed.parse::<i64>() {
                return Ok(Cell::Int(v));
            }
            match trimmed.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Cell::Float(v)),
                _ => Err(Error::CellParse {
                    row: row_idx,
                    column: spec.name.clone(),
                    value: raw.to_string(),
                }),
            }
        }
        ColumnKind::Categorical => {
            if spec.admissible_codes().contains(&trimmed) {
                Ok(Cell::Category(trimmed.to_string()))
            } else {
                Err(Error::SchemaMismatch(format!(
                    "row {row_idx}: code {trimmed:?} is not admissible for column {:?}",
                    spec.name
                )))
            }
        }
    }
}

/// Load an RFC-4180 CSV (header row required) against a schema manifest.
///
/// Header names must match the schema's column names exactly, order-insensitive.
pub fn load_csv(csv_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<TableDataset> {
    load_csv_with(csv_path, schema_path, &LoadOptions::default())
}

/// [`load_csv`] with explicit missing-value sentinels.
pub fn load_csv_with(
    csv_path: impl AsRef<Path>,
    schema_path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<TableDataset> {
    let schema = DatasetSchema::load(schema_path)?;
    let csv_path = csv_path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)
        .map_err(|e| Error::SchemaMismatch(format!("cannot open {}: {e}", csv_path.display())))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::SchemaMismatch(format!("cannot read CSV header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    // Order-insensitive exact match between header set and schema columns.
    let mut column_for_field = Vec::with_capacity(headers.len());
    let mut unknown = Vec::new();
    for header in &headers {
        match schema.column(header) {
            Some(spec) => column_for_field.push(spec.clone()),
            None => unknown.push(header.clone()),
        }
    }
    let missing: Vec<&str> = schema
        .columns
        .iter()
        .map(|c| c.name.as_str())
        .filter(|name| !headers.iter().any(|h| h == name))
        .collect();
    if !unknown.is_empty() || !missing.is_empty() {
        return Err(Error::SchemaMismatch(format!(
            "CSV header disagrees with schema (unknown: {unknown:?}, absent: {missing:?})"
        )));
    }

    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::SchemaMismatch(format!("CSV record {idx}: {e}")))?;
        if record.len() != column_for_field.len() {
            return Err(Error::SchemaMismatch(format!(
                "CSV record {idx} has {} fields, header has {}",
                record.len(),
                column_for_field.len()
            )));
        }
        let mut row = Row::new();
        for (field, spec) in record.iter().zip(&column_for_field) {
            let cell = parse_cell(field, spec, idx, options)?;
            row.set(spec.name.clone(), cell);
        }
        rows.push(row);
    }

    let provenance = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| csv_path.display().to_string());
    TableDataset::new(schema, rows, provenance)
}
