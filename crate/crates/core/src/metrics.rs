//! Group fairness metrics.
//!
//! All rates are computed by counting over explicit row-index sets. The
//! signed difference metrics are `unprivileged - privileged`, so a negative
//! value means the unprivileged group fares worse.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{summarize_feature, DataTable, Grouping};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "SPD")]
    Spd,
    EqOppDiff,
    AvgOddsDiff,
    DisparateImpact,
    Theil,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Spd,
        MetricKind::EqOppDiff,
        MetricKind::AvgOddsDiff,
        MetricKind::DisparateImpact,
        MetricKind::Theil,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Spd => "SPD",
            MetricKind::EqOppDiff => "EqOppDiff",
            MetricKind::AvgOddsDiff => "AvgOddsDiff",
            MetricKind::DisparateImpact => "DisparateImpact",
            MetricKind::Theil => "Theil",
        }
    }

    /// Metrics that need predictions as well as labels.
    pub fn requires_model(self) -> bool {
        matches!(
            self,
            MetricKind::EqOppDiff | MetricKind::AvgOddsDiff | MetricKind::Theil
        )
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "spd" | "statisticalparitydifference" => MetricKind::Spd,
            "eqoppdiff" | "equalopportunitydifference" | "equalityofopportunitydifference" => {
                MetricKind::EqOppDiff
            }
            "avgoddsdiff" | "averageoddsdifference" => MetricKind::AvgOddsDiff,
            "disparateimpact" | "di" => MetricKind::DisparateImpact,
            "theil" | "theilindex" => MetricKind::Theil,
            _ => {
                return Err(Error::Validation(format!(
                    "unknown metric kind `{s}`; expected one of SPD, EqOppDiff, AvgOddsDiff, DisparateImpact, Theil"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Dataset,
    Model,
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset" => Ok(View::Dataset),
            "model" => Ok(View::Model),
            _ => Err(Error::Validation(format!(
                "unknown view `{s}`; expected dataset or model"
            ))),
        }
    }
}

/// Scope name used for whole-model metrics.
pub const MODEL_SCOPE: &str = "model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub kind: MetricKind,
    /// Feature name, or `"model"`.
    pub scope: String,
    /// `None` when undefined.
    pub value: Option<f64>,
    pub defined: bool,
    pub view: View,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl MetricValue {
    fn new(kind: MetricKind, scope: &str, view: View, value: Option<f64>, why: &str) -> Self {
        Self {
            kind,
            scope: scope.to_string(),
            defined: value.is_some(),
            reason: value.is_none().then(|| why.to_string()),
            value,
            view,
        }
    }
}

/// Privileged value set for a sensitive feature; everything else with a
/// non-missing value is unprivileged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub feature: String,
    pub privileged: Vec<String>,
}

impl GroupSpec {
    pub fn new(feature: impl Into<String>, privileged: &[&str]) -> Self {
        Self {
            feature: feature.into(),
            privileged: privileged.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The same feature with privileged and unprivileged swapped.
    pub fn complement(&self, table: &DataTable) -> Result<Self> {
        let grouping = Grouping::of(table, &self.feature)?;
        Ok(Self {
            feature: self.feature.clone(),
            privileged: grouping
                .labels
                .into_iter()
                .filter(|l| !self.privileged.contains(l))
                .collect(),
        })
    }
}

/// Row indices on each side of a [`GroupSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupSplit {
    pub privileged: Vec<usize>,
    pub unprivileged: Vec<usize>,
}

impl GroupSplit {
    /// Split `rows` (all rows when `None`); rows with a missing cell are dropped.
    pub fn resolve(table: &DataTable, spec: &GroupSpec, rows: Option<&[usize]>) -> Result<Self> {
        let grouping = Grouping::of(table, &spec.feature)?;
        if spec.privileged.is_empty() {
            return Err(Error::Validation(format!(
                "privileged set for `{}` is empty",
                spec.feature
            )));
        }
        let mut is_priv = vec![false; grouping.labels.len()];
        for label in &spec.privileged {
            is_priv[grouping.label_index(label)?] = true;
        }
        if is_priv.iter().all(|p| *p) {
            return Err(Error::Validation(format!(
                "privileged set for `{}` covers every value",
                spec.feature
            )));
        }
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..table.n_rows()).collect();
                &all
            }
        };
        let mut split = GroupSplit::default();
        for &r in rows {
            match grouping.assignment[r] {
                Some(g) if is_priv[g] => split.privileged.push(r),
                Some(_) => split.unprivileged.push(r),
                None => {}
            }
        }
        Ok(split)
    }

    pub fn swapped(&self) -> Self {
        Self {
            privileged: self.unprivileged.clone(),
            unprivileged: self.privileged.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn of(predictions: &[bool], labels: &[bool], members: &[usize]) -> Self {
        let mut c = Self::default();
        for &i in members {
            match (predictions[i], labels[i]) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn tpr(&self) -> Option<f64> {
        let p = self.tp + self.fn_;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn fpr(&self) -> Option<f64> {
        let n = self.fp + self.tn;
        (n > 0).then(|| self.fp as f64 / n as f64)
    }
}

pub fn positive_rate(outcomes: &[bool], members: &[usize]) -> Option<f64> {
    if members.is_empty() {
        return None;
    }
    let pos = members.iter().filter(|&&i| outcomes[i]).count();
    Some(pos as f64 / members.len() as f64)
}

/// Statistical parity difference: `rate(unprivileged) - rate(privileged)`.
pub fn spd(outcomes: &[bool], split: &GroupSplit) -> Option<f64> {
    Some(positive_rate(outcomes, &split.unprivileged)? - positive_rate(outcomes, &split.privileged)?)
}

/// `rate(unprivileged) / rate(privileged)`; undefined when the privileged rate is 0.
pub fn disparate_impact(outcomes: &[bool], split: &GroupSplit) -> Option<f64> {
    let unpriv = positive_rate(outcomes, &split.unprivileged)?;
    let priv_ = positive_rate(outcomes, &split.privileged)?;
    (priv_ > 0.0).then(|| unpriv / priv_)
}

pub fn equal_opportunity_diff(predictions: &[bool], labels: &[bool], split: &GroupSplit) -> Option<f64> {
    let u = ConfusionCounts::of(predictions, labels, &split.unprivileged);
    let p = ConfusionCounts::of(predictions, labels, &split.privileged);
    Some(u.tpr()? - p.tpr()?)
}

pub fn average_odds_diff(predictions: &[bool], labels: &[bool], split: &GroupSplit) -> Option<f64> {
    let u = ConfusionCounts::of(predictions, labels, &split.unprivileged);
    let p = ConfusionCounts::of(predictions, labels, &split.privileged);
    Some(0.5 * ((u.fpr()? - p.fpr()?) + (u.tpr()? - p.tpr()?)))
}

/// Theil index of benefits `b = prediction - label + 1` over `members`.
pub fn theil_index(predictions: &[bool], labels: &[bool], members: &[usize]) -> Option<f64> {
    if members.is_empty() {
        return None;
    }
    // benefits only take the values 0, 1, 2
    let mut counts = [0usize; 3];
    for &i in members {
        let b = usize::from(predictions[i]) + 1 - usize::from(labels[i]);
        counts[b] += 1;
    }
    let n = members.len() as f64;
    let total = (counts[1] + 2 * counts[2]) as f64;
    if counts.iter().filter(|&&c| c > 0).count() <= 1 {
        return Some(0.0);
    }
    let mu = total / n;
    let term = |b: f64| {
        let r = b / mu;
        r * r.ln()
    };
    Some((counts[1] as f64 * term(1.0) + counts[2] as f64 * term(2.0)) / n)
}

/// Max minus min acceptance rate across the feature's values or bins.
pub fn spd_range(table: &DataTable, feature: &str, predictions: Option<&[Option<bool>]>) -> Result<f64> {
    Ok(summarize_feature(table, feature, predictions)?.rate_range())
}

/// Default privileged set: the single value (or bin) with the highest
/// recorded acceptance rate; ties go to the earliest value.
pub fn default_privileged(table: &DataTable, feature: &str) -> Result<GroupSpec> {
    let summary = summarize_feature(table, feature, None)?;
    let best = summary
        .groups
        .iter()
        .filter_map(|g| g.acceptance_rate.map(|r| (r, &g.label)))
        .fold(None::<(f64, &String)>, |acc, (r, l)| match acc {
            Some((br, _)) if br >= r => acc,
            _ => Some((r, l)),
        })
        .ok_or_else(|| Error::Validation(format!("feature `{feature}` has no values")))?;
    Ok(GroupSpec {
        feature: feature.to_string(),
        privileged: vec![best.1.clone()],
    })
}

/// What a metric is evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct MetricContext<'a> {
    pub table: &'a DataTable,
    pub view: View,
    /// Per-row predicted positive flags; required for the model view.
    pub predictions: Option<&'a [Option<bool>]>,
    /// Rows to evaluate on (the held-out split in the model view); all rows when `None`.
    pub rows: Option<&'a [usize]>,
}

impl<'a> MetricContext<'a> {
    pub fn dataset(table: &'a DataTable) -> Self {
        Self {
            table,
            view: View::Dataset,
            predictions: None,
            rows: None,
        }
    }

    pub fn model(table: &'a DataTable, predictions: &'a [Option<bool>], rows: &'a [usize]) -> Self {
        Self {
            table,
            view: View::Model,
            predictions: Some(predictions),
            rows: Some(rows),
        }
    }
}

/// Evaluate the chosen metrics for one sensitive feature.
pub fn metric_suite(ctx: &MetricContext<'_>, group: &GroupSpec, chosen: &[MetricKind]) -> Result<Vec<MetricValue>> {
    let labels = ctx.table.outcomes()?;
    let mut chosen = chosen.to_vec();
    chosen.sort();
    chosen.dedup();

    let (outcomes, predictions, rows): (Vec<bool>, Option<Vec<bool>>, Vec<usize>) = match ctx.view {
        View::Dataset => (
            labels.clone(),
            None,
            ctx.rows.map_or_else(|| (0..ctx.table.n_rows()).collect(), <[usize]>::to_vec),
        ),
        View::Model => {
            let preds = ctx
                .predictions
                .ok_or_else(|| Error::State("model view requires predictions".into()))?;
            if preds.len() != ctx.table.n_rows() {
                return Err(Error::Validation(format!(
                    "expected {} predictions, got {}",
                    ctx.table.n_rows(),
                    preds.len()
                )));
            }
            let rows: Vec<usize> = ctx
                .rows
                .map_or_else(|| (0..ctx.table.n_rows()).collect(), <[usize]>::to_vec)
                .into_iter()
                .filter(|&r| preds[r].is_some())
                .collect();
            let flat: Vec<bool> = preds.iter().map(|p| p.unwrap_or(false)).collect();
            (flat.clone(), Some(flat), rows)
        }
    };
    let split = GroupSplit::resolve(ctx.table, group, Some(&rows))?;
    let scope = group.feature.as_str();
    let empty_side = "a group has no members";

    Ok(chosen
        .into_iter()
        .map(|kind| match kind {
            MetricKind::Spd => MetricValue::new(kind, scope, ctx.view, spd(&outcomes, &split), empty_side),
            MetricKind::DisparateImpact => MetricValue::new(
                kind,
                scope,
                ctx.view,
                disparate_impact(&outcomes, &split),
                "privileged rate is zero or a group has no members",
            ),
            _ if predictions.is_none() => MetricValue::new(
                kind,
                if kind == MetricKind::Theil { MODEL_SCOPE } else { scope },
                ctx.view,
                None,
                "requires model view",
            ),
            MetricKind::EqOppDiff => MetricValue::new(
                kind,
                scope,
                ctx.view,
                equal_opportunity_diff(predictions.as_deref().unwrap(), &labels, &split),
                "a group has no actual positives",
            ),
            MetricKind::AvgOddsDiff => MetricValue::new(
                kind,
                scope,
                ctx.view,
                average_odds_diff(predictions.as_deref().unwrap(), &labels, &split),
                "a group has no actual positives or negatives",
            ),
            MetricKind::Theil => MetricValue::new(
                kind,
                MODEL_SCOPE,
                ctx.view,
                theil_index(predictions.as_deref().unwrap(), &labels, &rows),
                "no rows",
            ),
        })
        .collect())
}
