//! Standardized numeric encoding of mixed-type rows.
//!
//! Numeric features become one z-scored column. Categorical features are
//! one-hot encoded with the first level dropped, then z-scored. Columns with
//! zero variance encode as all zeros. The same fitted [`Encoder`] is shared by
//! structure learning, the decision model, and row similarity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, ColumnKind, DataTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EncodedSource {
    Numeric,
    /// Indicator for one category level.
    Level { level: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    /// Index into [`Encoder::features`].
    pub feature: usize,
    pub source: EncodedSource,
    pub mean: f64,
    /// Population standard deviation; 0 marks a constant column.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub features: Vec<String>,
    pub columns: Vec<EncodedColumn>,
}

/// Rows of a table encoded into a dense standardized matrix.
#[derive(Debug, Clone)]
pub struct EncodedMatrix {
    pub x: DMatrix<f64>,
    pub encoder: Encoder,
    /// Source row index for each matrix row.
    pub rows: Vec<usize>,
    pub dropped_rows: usize,
}

impl EncodedMatrix {
    /// Encoded column -> feature index.
    pub fn column_map(&self) -> Vec<usize> {
        self.encoder.columns.iter().map(|c| c.feature).collect()
    }
}

fn raw_value(table: &DataTable, col: &EncodedColumn, feature_col: usize, row: usize) -> Option<f64> {
    match (table.columns()[feature_col].cell(row), &col.source) {
        (Cell::Missing, _) => None,
        (Cell::Num(v), EncodedSource::Numeric) => Some(v),
        (Cell::Cat(s), EncodedSource::Level { level }) => Some(if s == level { 1.0 } else { 0.0 }),
        _ => None,
    }
}

impl Encoder {
    /// Fit on the rows of `table` with no missing cell among `features`.
    pub fn fit(table: &DataTable, features: &[String]) -> Result<(Self, Vec<usize>)> {
        let idx: Vec<usize> = features
            .iter()
            .map(|f| table.column_index(f))
            .collect::<Result<_>>()?;
        let rows = table.complete_rows(&idx);
        if rows.is_empty() {
            return Err(Error::Validation(
                "no rows without missing cells remain for encoding".into(),
            ));
        }
        let mut columns = Vec::new();
        for (fi, &ci) in idx.iter().enumerate() {
            let col = &table.columns()[ci];
            match col.kind() {
                ColumnKind::Numeric => columns.push(EncodedColumn {
                    name: col.name().to_string(),
                    feature: fi,
                    source: EncodedSource::Numeric,
                    mean: 0.0,
                    std: 0.0,
                }),
                ColumnKind::Categorical => {
                    for level in col.levels().iter().skip(1) {
                        columns.push(EncodedColumn {
                            name: format!("{}={}", col.name(), level),
                            feature: fi,
                            source: EncodedSource::Level {
                                level: level.clone(),
                            },
                            mean: 0.0,
                            std: 0.0,
                        });
                    }
                }
            }
        }
        let n = rows.len() as f64;
        for c in &mut columns {
            let ci = idx[c.feature];
            let values: Vec<f64> = rows
                .iter()
                .map(|&r| raw_value(table, c, ci, r).unwrap_or(0.0))
                .collect();
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            c.mean = mean;
            c.std = var.sqrt();
            // constant up to rounding
            if c.std <= 1e-12 * mean.abs().max(1.0) {
                c.std = 0.0;
            }
        }
        Ok((
            Self {
                features: features.to_vec(),
                columns,
            },
            rows,
        ))
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    fn feature_columns(&self, table: &DataTable) -> Result<Vec<usize>> {
        self.features.iter().map(|f| table.column_index(f)).collect()
    }

    /// Standardized values for one row, with `None` where the source cell is missing.
    pub fn encode_row_partial(&self, table: &DataTable, row: usize) -> Result<Vec<Option<f64>>> {
        let idx = self.feature_columns(table)?;
        Ok(self
            .columns
            .iter()
            .map(|c| {
                raw_value(table, c, idx[c.feature], row).map(|v| {
                    if c.std == 0.0 {
                        0.0
                    } else {
                        (v - c.mean) / c.std
                    }
                })
            })
            .collect())
    }

    /// Standardized row, or `None` if any used cell is missing.
    pub fn encode_row(&self, table: &DataTable, row: usize) -> Result<Option<Vec<f64>>> {
        Ok(self.encode_row_partial(table, row)?.into_iter().collect())
    }

    /// Encode all complete rows into a matrix.
    pub fn transform(&self, table: &DataTable) -> Result<EncodedMatrix> {
        let idx = self.feature_columns(table)?;
        let rows = table.complete_rows(&idx);
        if rows.is_empty() {
            return Err(Error::Validation(
                "no rows without missing cells remain for encoding".into(),
            ));
        }
        let d = self.dim();
        let mut x = DMatrix::zeros(rows.len(), d);
        for (i, &r) in rows.iter().enumerate() {
            let enc = self.encode_row(table, r)?.expect("complete row");
            for (j, v) in enc.into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        Ok(EncodedMatrix {
            x,
            encoder: self.clone(),
            dropped_rows: table.n_rows() - rows.len(),
            rows,
        })
    }
}

/// Fit an encoder on `features` and encode the table's complete rows.
pub fn encode(table: &DataTable, features: &[String]) -> Result<EncodedMatrix> {
    let (encoder, _) = Encoder::fit(table, features)?;
    encoder.transform(table)
}

/// Encode every column of the table, target included.
pub fn encode_all(table: &DataTable) -> Result<EncodedMatrix> {
    encode(table, &table.column_names())
}
