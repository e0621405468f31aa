use serde::{Deserialize, Serialize};

use super::logistic::ModelArtifact;
use crate::data::DataTable;
use crate::error::{Error, Result};

/// Logistic function, exact at 0 and stable for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub row: usize,
    pub logit: f64,
    pub p: f64,
    pub label: String,
    pub positive: bool,
    /// `|2p - 1|`: 0 on the decision boundary, 1 at certainty.
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignClass {
    Negative,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureContribution {
    pub feature: String,
    pub contribution: f64,
    pub sign: SignClass,
    /// `|c| / max |c|` within the row.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRow {
    pub row: usize,
    pub intercept: f64,
    pub logit: f64,
    pub features: Vec<FeatureContribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Largest absolute weight over the feature's encoded columns.
    pub raw: f64,
    /// `raw` divided by the largest `raw` of the model.
    pub importance: f64,
}

fn check_row(table: &DataTable, row: usize) -> Result<()> {
    if row >= table.n_rows() {
        return Err(Error::NotFound(format!(
            "row {row} (table has {} rows)",
            table.n_rows()
        )));
    }
    Ok(())
}

fn encoded_terms(model: &ModelArtifact, table: &DataTable, row: usize) -> Result<Option<Vec<f64>>> {
    check_row(table, row)?;
    Ok(model
        .encoder
        .encode_row(table, row)?
        .map(|x| x.iter().zip(&model.weights).map(|(x, w)| x * w).collect()))
}

/// Predict one row; `None` when a feature cell is missing.
pub fn predict(model: &ModelArtifact, table: &DataTable, row: usize) -> Result<Option<Prediction>> {
    let Some(terms) = encoded_terms(model, table, row)? else {
        return Ok(None);
    };
    let logit = model.intercept + terms.iter().sum::<f64>();
    let p = sigmoid(logit);
    let positive = p >= 0.5;
    Ok(Some(Prediction {
        row,
        logit,
        p,
        label: if positive {
            model.positive_label.clone()
        } else {
            model.negative_label.clone()
        },
        positive,
        confidence: (2.0 * p - 1.0).abs(),
    }))
}

pub fn predict_all(model: &ModelArtifact, table: &DataTable) -> Result<Vec<Option<Prediction>>> {
    (0..table.n_rows()).map(|r| predict(model, table, r)).collect()
}

pub fn feature_importance(model: &ModelArtifact) -> Vec<FeatureImportance> {
    let mut raw = vec![0.0f64; model.encoder.features.len()];
    for (c, w) in model.encoder.columns.iter().zip(&model.weights) {
        raw[c.feature] = raw[c.feature].max(w.abs());
    }
    let top = raw.iter().copied().fold(0.0, f64::max);
    model
        .encoder
        .features
        .iter()
        .zip(raw)
        .map(|(f, r)| FeatureImportance {
            feature: f.clone(),
            raw: r,
            importance: if top > 0.0 { r / top } else { 0.0 },
        })
        .collect()
}

/// Per-feature weight-times-value contributions to one row's logit.
pub fn contributions(model: &ModelArtifact, table: &DataTable, row: usize) -> Result<Option<ContributionRow>> {
    let Some(terms) = encoded_terms(model, table, row)? else {
        return Ok(None);
    };
    let mut per_feature = vec![0.0; model.encoder.features.len()];
    for (c, t) in model.encoder.columns.iter().zip(&terms) {
        per_feature[c.feature] += t;
    }
    let top = per_feature.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let features = model
        .encoder
        .features
        .iter()
        .zip(&per_feature)
        .map(|(f, &c)| FeatureContribution {
            feature: f.clone(),
            contribution: c,
            sign: if c < 0.0 {
                SignClass::Negative
            } else {
                SignClass::Positive
            },
            depth: if top > 0.0 { c.abs() / top } else { 0.0 },
        })
        .collect();
    Ok(Some(ContributionRow {
        row,
        intercept: model.intercept,
        logit: model.intercept + terms.iter().sum::<f64>(),
        features,
    }))
}
