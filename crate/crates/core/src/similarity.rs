//! Row-to-row similarity for individual fairness comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audit::Prediction;
use crate::data::{Cell, ColumnKind, DataTable};
use crate::encoding::Encoder;
use crate::error::{Error, Result};
use crate::metrics::View;

/// Half-width of the horizontal jitter in the dataset-view scatter.
pub const JITTER: f64 = 0.15;

/// Pearson correlation across the coordinates of two vectors. If either
/// vector is constant the result is 1 when the vectors are equal, else 0.
pub fn row_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "vector dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Validation("similarity needs at least 2 coordinates".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(a) || constant(b) {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Standardized encoding of one row; missing cells sit at the column mean (0).
#[derive(Debug, Clone, PartialEq)]
pub struct RowVector {
    pub row: usize,
    pub values: Vec<f64>,
    pub imputed: Vec<bool>,
}

/// Encoded vectors for every row of a table.
#[derive(Debug, Clone)]
pub struct SimilarityIndex {
    pub encoder: Encoder,
    pub vectors: Vec<RowVector>,
}

impl SimilarityIndex {
    pub fn new(encoder: Encoder, table: &DataTable) -> Result<Self> {
        let vectors = (0..table.n_rows())
            .map(|row| {
                let partial = encoder.encode_row_partial(table, row)?;
                Ok(RowVector {
                    row,
                    imputed: partial.iter().map(Option::is_none).collect(),
                    values: partial.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { encoder, vectors })
    }

    /// Index over every non-target feature of the table.
    pub fn build(table: &DataTable) -> Result<Self> {
        let (encoder, _) = Encoder::fit(table, &table.feature_names())?;
        Self::new(encoder, table)
    }

    pub fn vector(&self, row: usize) -> Result<&RowVector> {
        self.vectors.get(row).ok_or_else(|| {
            Error::NotFound(format!("row {row} (table has {} rows)", self.vectors.len()))
        })
    }

    pub fn similarity(&self, a: usize, b: usize) -> Result<f64> {
        row_similarity(&self.vector(a)?.values, &self.vector(b)?.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPoint {
    pub id: usize,
    pub sim: f64,
    /// Jittered class position (dataset view) or prediction confidence
    /// (model view; `None` when the row has no prediction).
    pub x: Option<f64>,
    /// Recorded label (dataset view) or predicted label (model view).
    pub label: Option<String>,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatter {
    pub selected: usize,
    pub view: View,
    pub points: Vec<SimilarityPoint>,
}

/// Deterministic offset in `[-JITTER, JITTER]` for a row.
pub fn jitter(row: usize) -> f64 {
    ChaCha8Rng::seed_from_u64(row as u64).gen_range(-JITTER..=JITTER)
}

/// Similarity of every row to `selected`. The model view needs one
/// prediction slot per row.
pub fn scatter(
    index: &SimilarityIndex,
    table: &DataTable,
    selected: usize,
    view: View,
    predictions: Option<&[Option<Prediction>]>,
) -> Result<Scatter> {
    let anchor = &index.vector(selected)?.values;
    let labels = table.outcomes()?;
    let predictions = match view {
        View::Model => Some(
            predictions.ok_or_else(|| Error::State("model view requires a trained model".into()))?,
        ),
        View::Dataset => None,
    };
    let (pos, neg) = (
        table.positive_label().unwrap_or_default(),
        table.negative_label().unwrap_or_default(),
    );
    let points = index
        .vectors
        .iter()
        .map(|v| {
            let sim = row_similarity(anchor, &v.values)?;
            let (x, label) = match predictions {
                None => {
                    let positive = labels[v.row];
                    let base = if positive { 1.0 } else { 0.0 };
                    (Some(base + jitter(v.row)), Some(if positive { pos } else { neg }.to_string()))
                }
                Some(p) => match p.get(v.row).and_then(Option::as_ref) {
                    Some(p) => (Some(p.confidence), Some(p.label.clone())),
                    None => (None, None),
                },
            };
            Ok(SimilarityPoint {
                id: v.row,
                sim,
                x,
                label,
                selected: v.row == selected,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Scatter {
        selected,
        view,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureComparison {
    pub name: String,
    pub va: Value,
    pub vb: Value,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: usize,
    pub b: usize,
    /// Least similar first.
    pub features: Vec<FeatureComparison>,
}

fn cell_value(cell: Cell<'_>) -> Value {
    match cell {
        Cell::Num(x) => serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number),
        Cell::Cat(s) => Value::String(s.to_string()),
        Cell::Missing => Value::Null,
    }
}

/// Per-feature agreement of two rows over the non-target features.
/// Numeric: `1 - |a - b| / (max - min)`, 1 for constant columns.
/// Categorical: 1 if equal, else 0. Two missing cells score 1, one scores 0.
pub fn compare_pair(table: &DataTable, a: usize, b: usize) -> Result<PairComparison> {
    for r in [a, b] {
        if r >= table.n_rows() {
            return Err(Error::NotFound(format!(
                "row {r} (table has {} rows)",
                table.n_rows()
            )));
        }
    }
    let mut features = Vec::new();
    for name in table.feature_names() {
        let col = table.column(&name)?;
        let (ca, cb) = (col.cell(a), col.cell(b));
        let score = match (ca, cb) {
            (Cell::Missing, Cell::Missing) => 1.0,
            (Cell::Missing, _) | (_, Cell::Missing) => 0.0,
            (Cell::Num(x), Cell::Num(y)) => {
                let schema = col.schema();
                let range = schema.max.unwrap_or(0.0) - schema.min.unwrap_or(0.0);
                if range > 0.0 {
                    (1.0 - (x - y).abs() / range).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            }
            (x, y) => {
                debug_assert_eq!(col.kind(), ColumnKind::Categorical);
                if x == y {
                    1.0
                } else {
                    0.0
                }
            }
        };
        features.push(FeatureComparison {
            name,
            va: cell_value(ca),
            vb: cell_value(cb),
            score,
        });
    }
    features.sort_by(|x, y| x.score.total_cmp(&y.score));
    Ok(PairComparison { a, b, features })
}
