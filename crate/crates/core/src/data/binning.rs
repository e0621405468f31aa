use serde::{Deserialize, Serialize};

use super::{ColumnKind, DataTable};
use crate::error::{Error, Result};

/// Equal-width bins over a numeric column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub feature: String,
    /// k+1 strictly increasing edges; a single repeated edge for constant columns.
    pub edges: Vec<f64>,
    pub labels: Vec<String>,
}

impl BinSpec {
    /// Bin count chosen by the square-root rule, capped at `k_max`.
    pub fn bin_count(n_non_missing: usize, k_max: usize) -> usize {
        let root = (n_non_missing as f64).sqrt().ceil() as usize;
        root.clamp(1, k_max.max(1))
    }

    pub fn from_values(feature: &str, values: impl Iterator<Item = f64>, k_max: usize) -> Result<Self> {
        let mut n = 0usize;
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            return Err(Error::AllMissing(feature.to_string()));
        }
        if min == max {
            return Ok(Self {
                feature: feature.to_string(),
                edges: vec![min, max],
                labels: vec![super::csvio::format_number(min)],
            });
        }
        let k = Self::bin_count(n, k_max);
        let width = (max - min) / k as f64;
        let mut edges: Vec<f64> = (0..k).map(|i| min + width * i as f64).collect();
        edges.push(max);
        let labels = range_labels(&edges);
        Ok(Self {
            feature: feature.to_string(),
            edges,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Index of the bin holding `x`; bins are half-open except the last.
    /// Values outside the edge range clamp to the first or last bin.
    pub fn bin_of(&self, x: f64) -> usize {
        let k = self.len();
        if k == 1 {
            return 0;
        }
        // `partition_point` gives the count of interior edges <= x.
        let interior = &self.edges[1..k];
        interior.partition_point(|&e| e <= x).min(k - 1)
    }
}

/// Labels like `[18, 23.7)` with enough decimals that neighbours differ.
fn range_labels(edges: &[f64]) -> Vec<String> {
    let k = edges.len() - 1;
    let min_gap = edges
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let mut decimals = if min_gap >= 1.0 {
        1
    } else {
        (-min_gap.log10()).ceil() as usize + 1
    };
    decimals = decimals.min(12);
    let fmt = |v: f64| {
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    };
    (0..k)
        .map(|i| {
            let close = if i + 1 == k { ']' } else { ')' };
            format!("[{}, {}{close}", fmt(edges[i]), fmt(edges[i + 1]))
        })
        .collect()
}

/// Bin a numeric feature of `table` using the table's bin cap.
pub fn bin_numeric(table: &DataTable, feature: &str) -> Result<BinSpec> {
    let col = table.column(feature)?;
    if col.kind() != ColumnKind::Numeric {
        return Err(Error::Validation(format!("feature `{feature}` is not numeric")));
    }
    let values = (0..col.len()).filter_map(|r| col.number(r));
    BinSpec::from_values(feature, values, table.bin_cap())
}
