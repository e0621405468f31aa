//! Typed column store for tabular decision data.
//!
//! A [`DataTable`] is immutable once built. Columns are either numeric or
//! categorical; the kind is inferred from the raw text cells unless a column
//! is constructed explicitly (derived columns are always numeric).

mod binning;
mod csvio;
mod summary;
pub mod synth;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binning::{bin_numeric, BinSpec};
pub(crate) use csvio::format_number;
pub use csvio::{export_csv, load_csv, load_csv_with};
pub use summary::{
    filter_rows, summarize_feature, Constraint, FeatureSummary, GroupSummary, Grouping, Predicate,
};
pub use synth::synth_loans;

/// Text cells treated as missing.
pub const MISSING_MARKERS: [&str; 2] = ["", "NA"];

pub const DEFAULT_NUMERIC_THRESHOLD: usize = 12;
pub const DEFAULT_BIN_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Category labels in canonical order; empty for numeric columns.
    pub distinct_values: Vec<String>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub missing_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    /// Codes index into `ColumnSchema::distinct_values`.
    Categorical(Vec<Option<u32>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    schema: ColumnSchema,
    data: ColumnData,
}

/// A borrowed view of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Num(f64),
    Cat(&'a str),
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferOptions {
    pub numeric_threshold: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            numeric_threshold: DEFAULT_NUMERIC_THRESHOLD,
        }
    }
}

pub fn is_missing(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell)
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Decide the kind of a column from its raw text cells.
pub fn infer_kind<S: AsRef<str>>(
    name: &str,
    cells: &[S],
    opts: InferOptions,
) -> Result<ColumnKind> {
    let mut distinct = HashSet::new();
    let mut all_numeric = true;
    let mut seen = false;
    for cell in cells.iter().map(AsRef::as_ref).filter(|c| !is_missing(c)) {
        seen = true;
        match parse_number(cell) {
            Some(v) => {
                // -0.0 and 0.0 are the same value
                distinct.insert((v + 0.0).to_bits());
            }
            None => {
                all_numeric = false;
                break;
            }
        }
    }
    if !seen {
        return Err(Error::AllMissing(name.to_string()));
    }
    if all_numeric && distinct.len() > opts.numeric_threshold {
        Ok(ColumnKind::Numeric)
    } else {
        Ok(ColumnKind::Categorical)
    }
}

/// Canonical level order: numeric order when every label parses as a number,
/// lexicographic otherwise.
fn sort_levels(levels: &mut [String]) {
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| parse_number(l)).collect();
    if numeric.is_some() {
        levels.sort_by(|a, b| {
            let (x, y) = (parse_number(a).unwrap(), parse_number(b).unwrap());
            x.total_cmp(&y).then_with(|| a.cmp(b))
        });
    } else {
        levels.sort();
    }
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Result<Self> {
        let name = name.into();
        let values: Vec<Option<f64>> = values
            .into_iter()
            .map(|v| v.filter(|x| x.is_finite()))
            .collect();
        let present = values.iter().flatten();
        let min = present.clone().copied().reduce(f64::min);
        let max = present.copied().reduce(f64::max);
        let missing_count = values.iter().filter(|v| v.is_none()).count();
        Ok(Self {
            schema: ColumnSchema {
                name,
                kind: ColumnKind::Numeric,
                distinct_values: Vec::new(),
                min,
                max,
                missing_count,
            },
            data: ColumnData::Numeric(values),
        })
    }

    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, cells: &[Option<S>]) -> Self {
        let mut levels: Vec<String> = cells
            .iter()
            .flatten()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        sort_levels(&mut levels);
        let index: HashMap<&str, u32> = levels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i as u32))
            .collect();
        let codes: Vec<Option<u32>> = cells
            .iter()
            .map(|c| c.as_ref().map(|s| index[s.as_ref()]))
            .collect();
        let missing_count = codes.iter().filter(|c| c.is_none()).count();
        Self {
            schema: ColumnSchema {
                name: name.into(),
                kind: ColumnKind::Categorical,
                distinct_values: levels,
                min: None,
                max: None,
                missing_count,
            },
            data: ColumnData::Categorical(codes),
        }
    }

    /// Build a column from raw text cells, inferring its kind.
    pub fn from_text<S: AsRef<str>>(name: &str, cells: &[S], opts: InferOptions) -> Result<Self> {
        match infer_kind(name, cells, opts)? {
            ColumnKind::Numeric => Column::numeric(
                name,
                cells
                    .iter()
                    .map(|c| {
                        let c = c.as_ref();
                        if is_missing(c) {
                            None
                        } else {
                            parse_number(c)
                        }
                    })
                    .collect(),
            ),
            ColumnKind::Categorical => {
                let cells: Vec<Option<&str>> = cells
                    .iter()
                    .map(|c| Some(c.as_ref()).filter(|c| !is_missing(c)))
                    .collect();
                Ok(Column::categorical(name, &cells))
            }
        }
    }

    pub fn schema(&self) -> &ColumnSchema {
        &self.schema
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.schema.kind
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn levels(&self) -> &[String] {
        &self.schema.distinct_values
    }

    pub fn cell(&self, row: usize) -> Cell<'_> {
        match &self.data {
            ColumnData::Numeric(v) => v[row].map_or(Cell::Missing, Cell::Num),
            ColumnData::Categorical(v) => v[row].map_or(Cell::Missing, |c| {
                Cell::Cat(&self.schema.distinct_values[c as usize])
            }),
        }
    }

    pub fn number(&self, row: usize) -> Option<f64> {
        match &self.data {
            ColumnData::Numeric(v) => v[row],
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn code(&self, row: usize) -> Option<u32> {
        match &self.data {
            ColumnData::Categorical(v) => v[row],
            ColumnData::Numeric(_) => None,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        matches!(self.cell(row), Cell::Missing)
    }

    pub fn non_missing_count(&self) -> usize {
        self.len() - self.schema.missing_count
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Target {
    column: usize,
    positive: u32,
}

/// Immutable table of applications with an optional designated binary target.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    columns: Vec<Column>,
    n_rows: usize,
    target: Option<Target>,
    bin_cap: usize,
}

impl DataTable {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        if n_rows == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut names = HashSet::new();
        for col in &columns {
            if !names.insert(col.name()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", col.name())));
            }
            if col.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column `{}` has {} cells, expected {n_rows}",
                    col.name(),
                    col.len()
                )));
            }
        }
        Ok(Self {
            columns,
            n_rows,
            target: None,
            bin_cap: DEFAULT_BIN_CAP,
        })
    }

    /// Build from a header and rectangular text records.
    pub fn from_records(
        header: &[String],
        rows: &[Vec<String>],
        opts: InferOptions,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for name in header {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate header `{name}`")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != header.len() {
                return Err(Error::Structural {
                    row: i + 1,
                    expected: header.len(),
                    found: row.len(),
                });
            }
        }
        let columns = header
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let cells: Vec<&str> = rows.iter().map(|r| r[j].as_str()).collect();
                Column::from_text(name, &cells, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        DataTable::new(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn schema(&self) -> Vec<ColumnSchema> {
        self.columns.iter().map(|c| c.schema.clone()).collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name().to_string()).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name() == name)
            .ok_or_else(|| Error::UnknownFeature {
                name: name.to_string(),
                available: self.column_names(),
            })
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn bin_cap(&self) -> usize {
        self.bin_cap
    }

    pub fn with_bin_cap(mut self, k_max: usize) -> Self {
        self.bin_cap = k_max.max(1);
        self
    }

    /// Designate a binary target column and its positive label.
    pub fn with_target(mut self, name: &str, positive: &str) -> Result<Self> {
        let idx = self.column_index(name)?;
        let col = &self.columns[idx];
        if col.kind() != ColumnKind::Categorical || col.levels().len() != 2 {
            return Err(Error::Validation(format!(
                "target `{name}` must have exactly 2 distinct values, found {}",
                match col.kind() {
                    ColumnKind::Categorical => col.levels().len().to_string(),
                    ColumnKind::Numeric => "a numeric column".to_string(),
                }
            )));
        }
        if col.schema.missing_count > 0 {
            return Err(Error::Validation(format!(
                "target `{name}` has {} missing cells",
                col.schema.missing_count
            )));
        }
        let positive_code = col
            .levels()
            .iter()
            .position(|l| l == positive)
            .ok_or_else(|| Error::UnknownValue {
                feature: name.to_string(),
                value: positive.to_string(),
            })?;
        self.target = Some(Target {
            column: idx,
            positive: positive_code as u32,
        });
        Ok(self)
    }

    pub fn target_name(&self) -> Option<&str> {
        self.target.as_ref().map(|t| self.columns[t.column].name())
    }

    pub fn target_index(&self) -> Option<usize> {
        self.target.as_ref().map(|t| t.column)
    }

    pub fn positive_label(&self) -> Option<&str> {
        self.target
            .as_ref()
            .map(|t| self.columns[t.column].levels()[t.positive as usize].as_str())
    }

    pub fn negative_label(&self) -> Option<&str> {
        self.target
            .as_ref()
            .map(|t| self.columns[t.column].levels()[1 - t.positive as usize].as_str())
    }

    /// Recorded outcomes as positive flags.
    pub fn outcomes(&self) -> Result<Vec<bool>> {
        let t = self
            .target
            .as_ref()
            .ok_or_else(|| Error::State("target not set".into()))?;
        let col = &self.columns[t.column];
        Ok((0..self.n_rows)
            .map(|r| col.code(r) == Some(t.positive))
            .collect())
    }

    /// Column names other than the target, in schema order.
    pub fn feature_names(&self) -> Vec<String> {
        let target = self.target_index();
        self.columns
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != target)
            .map(|(_, c)| c.name().to_string())
            .collect()
    }

    /// Append a numeric column, keeping the target designation.
    pub fn with_column(&self, column: Column) -> Result<Self> {
        if column.len() != self.n_rows {
            return Err(Error::Schema(format!(
                "column `{}` has {} cells, expected {}",
                column.name(),
                column.len(),
                self.n_rows
            )));
        }
        if self.columns.iter().any(|c| c.name() == column.name()) {
            return Err(Error::Schema(format!(
                "column `{}` already exists",
                column.name()
            )));
        }
        let mut out = self.clone();
        out.columns.push(column);
        Ok(out)
    }

    /// Rows that have no missing cell in any of the given columns.
    pub fn complete_rows(&self, columns: &[usize]) -> Vec<usize> {
        (0..self.n_rows)
            .filter(|&r| columns.iter().all(|&c| !self.columns[c].is_missing(r)))
            .collect()
    }
}
