//! Numeric encoding for baselines and neighbor search, plus the zero-padding
//! union of heterogeneous schemas.
//!
//! Features are min-max scaled (numeric) or one-hot encoded (categorical)
//! using statistics fitted on a caller-chosen row set. The target column is
//! never part of the encoding. Missing cells contribute 0 in their slots.

use std::collections::BTreeSet;

use crate::data::{Cell, Row};
use crate::error::{Error, Result};
use crate::schema::{ColumnKind, ColumnSpec, DatasetSchema};

#[derive(Clone, Debug)]
enum FittedColumn {
    /// Min-max statistics from the fit rows. A constant (or never observed)
    /// column encodes to 0.0 for every value.
    Numeric { name: String, min: f64, max: f64 },
    /// One-hot block, one slot per admissible code in schema order. The block
    /// width comes from the schema, not from the fit rows, so widths are
    /// stable across splits.
    Categorical { name: String, codes: Vec<String> },
}

/// Fitted encoder state: which columns map to which vector slots.
#[derive(Clone, Debug)]
pub struct BaselineEncoder {
    columns: Vec<FittedColumn>,
    width: usize,
}

impl BaselineEncoder {
    /// Fit min-max statistics over `fit_rows` for every non-target column of
    /// the schema.
    pub fn fit(schema: &DatasetSchema, fit_rows: &[Row]) -> Result<Self> {
        if fit_rows.is_empty() {
            return Err(Error::Config("encoder needs at least one fit row".into()));
        }
        let mut columns = Vec::new();
        let mut width = 0;
        for spec in schema.feature_columns() {
            match spec.kind {
                ColumnKind::Numeric => {
                    let mut min = f64::INFINITY;
                    let mut max = f64::NEG_INFINITY;
                    for row in fit_rows {
                        if let Some(v) = row.get(&spec.name).as_f64() {
                            min = min.min(v);
                            max = max.max(v);
                        }
                    }
                    if !min.is_finite() {
                        // Column never observed in the fit rows.
                        min = 0.0;
                        max = 0.0;
                    }
                    columns.push(FittedColumn::Numeric {
                        name: spec.name.clone(),
                        min,
                        max,
                    });
                    width += 1;
                }
                ColumnKind::Categorical => {
                    let codes: Vec<String> = spec
                        .admissible_codes()
                        .into_iter()
                        .map(str::to_string)
                        .collect();
                    width += codes.len();
                    columns.push(FittedColumn::Categorical {
                        name: spec.name.clone(),
                        codes,
                    });
                }
            }
        }
        Ok(BaselineEncoder { columns, width })
    }

    /// Total encoded vector width.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Encode one row. Missing cells produce 0.0 in all of their slots.
    pub fn encode_row(&self, row: &Row) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width);
        for col in &self.columns {
            match col {
                FittedColumn::Numeric { name, min, max } => {
                    let v = match row.get(name).as_f64() {
                        Some(v) if max > min => (v - min) / (max - min),
                        // Constant column or missing cell: zero slot.
                        _ => 0.0,
                    };
                    out.push(v);
                }
                FittedColumn::Categorical { name, codes } => {
                    let code = match row.get(name) {
                        Cell::Category(c) => Some(c.as_str()),
                        _ => None,
                    };
                    for candidate in codes {
                        out.push(if code == Some(candidate.as_str()) {
                            1.0
                        } else {
                            0.0
                        });
                    }
                }
            }
        }
        out
    }

    /// Encode a batch of rows into a matrix.
    pub fn encode(&self, rows: &[Row]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.encode_row(r)).collect()
    }
}

/// Fit an encoder and encode `rows` in one call.
pub fn encode_for_baselines(
    schema: &DatasetSchema,
    fit_rows: &[Row],
    rows: &[Row],
) -> Result<(BaselineEncoder, Vec<Vec<f64>>)> {
    let encoder = BaselineEncoder::fit(schema, fit_rows)?;
    let matrix = encoder.encode(rows);
    Ok((encoder, matrix))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Indices of the `k` pool rows closest to `anchor` in encoded Euclidean
/// space, ascending by distance with ties broken by pool index. The boolean is
/// true when `k` exceeded the pool and the whole pool was returned.
pub fn nearest_indices(
    anchor: &Row,
    pool: &[Row],
    k: usize,
    encoder: &BaselineEncoder,
) -> (Vec<usize>, bool) {
    let anchor_vec = encoder.encode_row(anchor);
    let mut scored: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(i, row)| (squared_distance(&anchor_vec, &encoder.encode_row(row)), i))
        .collect();
    // Squared distance orders identically to Euclidean distance.
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let truncated = k > pool.len();
    let take = k.min(pool.len());
    (scored.into_iter().take(take).map(|(_, i)| i).collect(), truncated)
}

/// The `k` nearest pool rows themselves; see [`nearest_indices`].
pub fn nearest_unlabeled(
    anchor: &Row,
    pool: &[Row],
    k: usize,
    encoder: &BaselineEncoder,
) -> (Vec<Row>, bool) {
    let (indices, truncated) = nearest_indices(anchor, pool, k, encoder);
    (indices.into_iter().map(|i| pool[i].clone()).collect(), truncated)
}

/// Merge a target schema with a heterogeneous source schema by column union.
///
/// The merged schema keeps the target dataset's label column, class labels,
/// task kind, and style; the source's own label column is dropped. Shared
/// column names must agree on kind and admissible codes.
pub fn zero_pad_union(
    target_schema: &DatasetSchema,
    source_schema: &DatasetSchema,
) -> Result<DatasetSchema> {
    let mut columns: Vec<ColumnSpec> = target_schema.columns.clone();
    let existing: BTreeSet<String> = columns.iter().map(|c| c.name.clone()).collect();
    for spec in &source_schema.columns {
        if spec.name == source_schema.target {
            continue; // Source labels are dropped.
        }
        if existing.contains(&spec.name) {
            let ours = target_schema.column(&spec.name).unwrap();
            if ours.kind != spec.kind || ours.admissible_codes() != spec.admissible_codes() {
                return Err(Error::SchemaMismatch(format!(
                    "column {:?} has conflicting definitions across schemas",
                    spec.name
                )));
            }
            continue;
        }
        columns.push(spec.clone());
    }
    let merged = DatasetSchema {
        columns,
        target: target_schema.target.clone(),
        class_labels: target_schema.class_labels.clone(),
        task_kind: target_schema.task_kind,
        style: target_schema.style.clone(),
    };
    merged.validate()?;
    Ok(merged)
}

/// Carry rows from both sides into the merged schema. Target rows pass
/// through unchanged; source rows lose their own label cell. Columns a row
/// never had stay missing and therefore encode to zeros.
pub fn zero_pad_rows(
    target_rows: &[Row],
    source_rows: &[Row],
    source_schema: &DatasetSchema,
) -> Vec<Row> {
    let mut merged = Vec::with_capacity(target_rows.len() + source_rows.len());
    merged.extend(target_rows.iter().cloned());
    merged.extend(
        source_rows
            .iter()
            .map(|row| row.without(&source_schema.target)),
    );
    merged
}
