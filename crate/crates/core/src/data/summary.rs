use serde::{Deserialize, Serialize};

use super::{bin_numeric, BinSpec, ColumnKind, DataTable};
use crate::error::{Error, Result};

/// Per-row group assignment for one feature: category levels for
/// categorical columns, bins for numeric ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub feature: String,
    pub labels: Vec<String>,
    /// `None` for rows whose cell is missing.
    pub assignment: Vec<Option<usize>>,
    pub bins: Option<BinSpec>,
}

impl Grouping {
    pub fn of(table: &DataTable, feature: &str) -> Result<Self> {
        let col = table.column(feature)?;
        match col.kind() {
            ColumnKind::Categorical => Ok(Self {
                feature: feature.to_string(),
                labels: col.levels().to_vec(),
                assignment: (0..col.len())
                    .map(|r| col.code(r).map(|c| c as usize))
                    .collect(),
                bins: None,
            }),
            ColumnKind::Numeric => {
                let spec = bin_numeric(table, feature)?;
                let assignment = (0..col.len())
                    .map(|r| col.number(r).map(|x| spec.bin_of(x)))
                    .collect();
                Ok(Self {
                    feature: feature.to_string(),
                    labels: spec.labels.clone(),
                    assignment,
                    bins: Some(spec),
                })
            }
        }
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownValue {
                feature: self.feature.clone(),
                value: label.to_string(),
            })
    }

    /// Row indices belonging to each group, in original row order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.labels.len()];
        for (row, g) in self.assignment.iter().enumerate() {
            if let Some(g) = g {
                out[*g].push(row);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub count: usize,
    pub positive_count: usize,
    /// `None` for empty groups.
    pub acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: String,
    pub groups: Vec<GroupSummary>,
    pub overall_rate: f64,
    pub missing_count: usize,
}

impl FeatureSummary {
    /// Max minus min acceptance rate over non-empty groups.
    pub fn rate_range(&self) -> f64 {
        let rates = self.groups.iter().filter_map(|g| g.acceptance_rate);
        let (lo, hi) = rates.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }

    pub fn group(&self, label: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.label == label)
    }
}

/// Per-feature target distribution. `predictions`, when given, replaces the
/// recorded outcomes (model view); rows with an undefined prediction are skipped.
pub fn summarize_feature(
    table: &DataTable,
    feature: &str,
    predictions: Option<&[Option<bool>]>,
) -> Result<FeatureSummary> {
    let grouping = Grouping::of(table, feature)?;
    let outcomes: Vec<Option<bool>> = match predictions {
        Some(p) => {
            if p.len() != table.n_rows() {
                return Err(Error::Validation(format!(
                    "expected {} predictions, got {}",
                    table.n_rows(),
                    p.len()
                )));
            }
            p.to_vec()
        }
        None => table.outcomes()?.into_iter().map(Some).collect(),
    };
    let k = grouping.labels.len();
    let mut counts = vec![0usize; k];
    let mut positives = vec![0usize; k];
    let (mut total, mut total_pos) = (0usize, 0usize);
    for (g, outcome) in grouping.assignment.iter().zip(&outcomes) {
        let Some(outcome) = outcome else { continue };
        total += 1;
        total_pos += usize::from(*outcome);
        if let Some(g) = g {
            counts[*g] += 1;
            positives[*g] += usize::from(*outcome);
        }
    }
    let groups = grouping
        .labels
        .iter()
        .enumerate()
        .map(|(i, label)| GroupSummary {
            label: label.clone(),
            count: counts[i],
            positive_count: positives[i],
            acceptance_rate: (counts[i] > 0).then(|| positives[i] as f64 / counts[i] as f64),
        })
        .collect();
    Ok(FeatureSummary {
        feature: feature.to_string(),
        groups,
        overall_rate: if total > 0 {
            total_pos as f64 / total as f64
        } else {
            0.0
        },
        missing_count: table.column(feature)?.schema().missing_count,
    })
}

/// Row-selection predicate on one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Predicate {
    /// Category level, or bin label for numeric features.
    Equals { value: String },
    /// Inclusive numeric range.
    Range { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub feature: String,
    #[serde(flatten)]
    pub predicate: Predicate,
}

impl Constraint {
    pub fn equals(feature: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            feature: feature.into(),
            predicate: Predicate::Equals {
                value: value.into(),
            },
        }
    }

    pub fn range(feature: impl Into<String>, min: f64, max: f64) -> Self {
        Self {
            feature: feature.into(),
            predicate: Predicate::Range { min, max },
        }
    }

    /// Per-row membership mask.
    pub fn mask(&self, table: &DataTable) -> Result<Vec<bool>> {
        let col = table.column(&self.feature)?;
        match &self.predicate {
            Predicate::Equals { value } => {
                let grouping = Grouping::of(table, &self.feature)?;
                let idx = grouping.label_index(value)?;
                Ok(grouping.assignment.iter().map(|g| *g == Some(idx)).collect())
            }
            Predicate::Range { min, max } => {
                if col.kind() != ColumnKind::Numeric {
                    return Err(Error::Validation(format!(
                        "range constraint on categorical feature `{}`",
                        self.feature
                    )));
                }
                if min > max || min.is_nan() || max.is_nan() {
                    return Err(Error::Validation(format!(
                        "empty range [{min}, {max}] for `{}`",
                        self.feature
                    )));
                }
                Ok((0..col.len())
                    .map(|r| col.number(r).is_some_and(|x| x >= *min && x <= *max))
                    .collect())
            }
        }
    }
}

/// Rows satisfying every constraint, in original order.
pub fn filter_rows(table: &DataTable, constraints: &[Constraint]) -> Result<Vec<usize>> {
    let mut keep = vec![true; table.n_rows()];
    for c in constraints {
        for (k, m) in keep.iter_mut().zip(c.mask(table)?) {
            *k &= m;
        }
    }
    Ok(keep
        .iter()
        .enumerate()
        .filter(|(_, k)| **k)
        .map(|(i, _)| i)
        .collect())
}
