//! Read-only payloads for the main screen components.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{SessionState, Step};
use crate::audit::{contributions, feature_importance, ContributionRow, Prediction};
use crate::causal::{drill_down, CausalGraph};
use crate::data::{
    filter_rows, summarize_feature, Cell, ColumnKind, ColumnSchema, Constraint, FeatureSummary,
    Grouping,
};
use crate::error::{Error, Result};
use crate::metrics::{default_privileged, metric_suite, MetricContext, MetricValue, View};
use crate::similarity::{compare_pair, scatter, PairComparison, Scatter};
use crate::subgroup::{apply_min_support, build_card, order_cards, SubgroupCard};

pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStatus {
    pub step: Step,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WizardStatus {
    pub id: String,
    pub role: super::Role,
    pub version: u64,
    pub step_count: usize,
    pub steps: Vec<StepStatus>,
    pub next: Option<Step>,
    pub ready: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOverview {
    pub family: String,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Share of test rows whose prediction matches the recorded outcome.
    pub accuracy: Option<f64>,
    pub mean_confidence: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overview {
    pub view: View,
    /// All rows (dataset view) or test rows with a prediction (model view).
    pub instances: usize,
    pub positive_count: usize,
    pub acceptance_rate: Option<f64>,
    pub target: String,
    pub positive_label: String,
    pub negative_label: String,
    pub columns: Vec<ColumnSchema>,
    pub model: Option<ModelOverview>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBars {
    pub feature: String,
    pub groups: Vec<crate::data::GroupSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphView {
    pub view: View,
    #[serde(flatten)]
    pub graph: CausalGraph,
    /// Per-node acceptance rate by value or bin.
    pub bars: Vec<FeatureBars>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub feature: String,
    pub view: View,
    pub schema: ColumnSchema,
    pub in_degree: Option<usize>,
    pub out_degree: Option<usize>,
    pub sensitive: bool,
    pub privileged: Option<Vec<String>>,
    pub unfair: bool,
    pub summary: FeatureSummary,
    /// Mean prediction confidence per group, model view only.
    pub mean_confidence: Option<Vec<Option<f64>>>,
    pub spd_range: f64,
    pub metrics: Vec<MetricValue>,
    pub importance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipSegment {
    pub effect_value: String,
    pub count: usize,
    /// Share of the cause group, in percent.
    pub percent: f64,
    pub acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipGroup {
    pub cause_value: String,
    pub count: usize,
    pub segments: Vec<RelationshipSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relationship {
    pub view: View,
    pub cause: String,
    pub effect: String,
    pub strength: Option<f64>,
    pub groups: Vec<RelationshipGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortKey {
    pub feature: String,
    #[serde(default)]
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetQuery {
    pub filters: Vec<Constraint>,
    pub sort: Option<SortKey>,
    pub page: usize,
    pub page_size: usize,
}

impl Default for DatasetQuery {
    fn default() -> Self {
        Self {
            filters: Vec::new(),
            sort: None,
            page: 0,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCell {
    pub label: String,
    pub p: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: usize,
    pub cells: Vec<Value>,
    pub prediction: Option<PredictionCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPage {
    pub view: View,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub columns: Vec<String>,
    pub rows: Vec<DatasetRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub feature: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Application {
    pub id: usize,
    pub view: View,
    pub values: Vec<FeatureValue>,
    pub outcome: String,
    pub prediction: Option<Prediction>,
    pub contributions: Option<ContributionRow>,
}

pub(crate) fn cell_json(cell: Cell<'_>) -> Value {
    match cell {
        Cell::Num(x) => serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number),
        Cell::Cat(s) => Value::String(s.to_string()),
        Cell::Missing => Value::Null,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl SessionState {
    pub fn wizard(&self) -> WizardStatus {
        let steps: Vec<StepStatus> = self
            .role
            .steps()
            .iter()
            .map(|s| StepStatus {
                step: *s,
                completed: self.step_done(*s),
            })
            .collect();
        WizardStatus {
            id: self.id.clone(),
            role: self.role,
            version: self.version,
            step_count: steps.len(),
            next: steps.iter().find(|s| !s.completed).map(|s| s.step),
            steps,
            ready: self.is_ready(),
        }
    }

    /// Predicted outcomes per row, or an error before training.
    fn view_predictions(&self, view: View) -> Result<Option<Vec<Option<bool>>>> {
        match view {
            View::Dataset => Ok(None),
            View::Model => Ok(Some(self.require_model()?.flags())),
        }
    }

    pub fn overview(&self, view: View) -> Result<Overview> {
        self.require_ready()?;
        let table = self.table()?;
        let labels = table.outcomes()?;
        let (instances, positive_count, model) = match view {
            View::Dataset => (labels.len(), labels.iter().filter(|&&o| o).count(), None),
            View::Model => {
                let m = self.require_model()?;
                let test: Vec<&Prediction> = m
                    .split
                    .test
                    .iter()
                    .filter_map(|&r| m.predictions[r].as_ref())
                    .collect();
                let correct = test.iter().filter(|p| p.positive == labels[p.row]).count();
                let summary = ModelOverview {
                    family: m.artifact.family.clone(),
                    train_rows: m.artifact.meta.train_rows,
                    test_rows: test.len(),
                    accuracy: (!test.is_empty()).then(|| correct as f64 / test.len() as f64),
                    mean_confidence: mean(test.iter().map(|p| p.confidence)),
                    converged: m.artifact.meta.converged,
                    iterations: m.artifact.meta.iterations,
                };
                (test.len(), test.iter().filter(|p| p.positive).count(), Some(summary))
            }
        };
        Ok(Overview {
            view,
            instances,
            positive_count,
            acceptance_rate: (instances > 0).then(|| positive_count as f64 / instances as f64),
            target: table.target_name().unwrap_or_default().to_string(),
            positive_label: table.positive_label().unwrap_or_default().to_string(),
            negative_label: table.negative_label().unwrap_or_default().to_string(),
            columns: table.schema(),
            model,
        })
    }

    /// The cached graph with session flags and view statistics applied.
    /// `keep` selects a drill-down subgraph.
    pub fn graph_view(&self, view: View, keep: Option<&[String]>) -> Result<GraphView> {
        self.require_ready()?;
        let table = self.table()?;
        let base = self
            .graph()
            .ok_or_else(|| Error::State("the causal graph has not been computed".into()))?;
        let predictions = self.view_predictions(view)?;
        let importance = match view {
            View::Model => Some(feature_importance(&self.require_model()?.artifact)),
            View::Dataset => None,
        };
        let mut graph = match keep {
            Some(k) => {
                for f in k {
                    table.column_index(f)?;
                }
                drill_down(base, k)
            }
            None => (**base).clone(),
        };
        let mut bars = Vec::new();
        for node in &mut graph.nodes {
            node.sensitive = self.sensitive.iter().any(|s| s.feature == node.feature);
            node.unfair = self.flagged_features.contains(&node.feature);
            let summary = summarize_feature(table, &node.feature, predictions.as_deref())?;
            node.spd_range = if node.target { 0.0 } else { summary.rate_range() };
            node.importance = importance.as_ref().map(|imp| {
                imp.iter()
                    .find(|i| i.feature == node.feature)
                    .map_or(0.0, |i| i.importance)
            });
            bars.push(FeatureBars {
                feature: node.feature.clone(),
                groups: summary.groups,
            });
        }
        Ok(GraphView { view, graph, bars })
    }

    pub fn feature_info(&self, feature: &str, view: View) -> Result<FeatureInfo> {
        self.require_ready()?;
        let table = self.table()?;
        let col = table.column(feature)?;
        let predictions = self.view_predictions(view)?;
        let summary = summarize_feature(table, feature, predictions.as_deref())?;
        let node = self.graph().and_then(|g| g.node(feature).cloned());
        let sensitive = self.sensitive_spec(feature);
        let is_target = table.target_name() == Some(feature);

        let mut metrics = Vec::new();
        let group = match &sensitive {
            Some(s) => Some(s.clone()),
            None if !is_target => default_privileged(table, feature).ok(),
            None => None,
        };
        let (mean_confidence, importance) = match view {
            View::Dataset => {
                if let Some(g) = &group {
                    if let Ok(v) = metric_suite(&MetricContext::dataset(table), g, self.metrics()) {
                        metrics = v;
                    }
                }
                (None, None)
            }
            View::Model => {
                let m = self.require_model()?;
                let flags = m.flags();
                if let Some(g) = &group {
                    let ctx = MetricContext::model(table, &flags, &m.split.test);
                    if let Ok(v) = metric_suite(&ctx, g, self.metrics()) {
                        metrics = v;
                    }
                }
                let grouping = Grouping::of(table, feature)?;
                let conf = grouping
                    .members()
                    .iter()
                    .map(|rows| {
                        mean(rows.iter().filter_map(|&r| m.predictions[r].as_ref().map(|p| p.confidence)))
                    })
                    .collect();
                let imp = feature_importance(&m.artifact)
                    .into_iter()
                    .find(|i| i.feature == feature)
                    .map(|i| i.importance);
                (Some(conf), imp)
            }
        };
        Ok(FeatureInfo {
            feature: feature.to_string(),
            view,
            schema: col.schema().clone(),
            in_degree: node.as_ref().map(|n| n.in_degree),
            out_degree: node.as_ref().map(|n| n.out_degree),
            sensitive: sensitive.is_some(),
            privileged: sensitive.map(|s| s.privileged),
            unfair: self.flagged_features.contains(feature),
            spd_range: if is_target { 0.0 } else { summary.rate_range() },
            summary,
            mean_confidence,
            metrics,
            importance,
        })
    }

    /// Intersection of two features' values. The cause is the source of the
    /// graph edge between them when one exists, otherwise `a`.
    pub fn relationship(&self, a: &str, b: &str, view: View) -> Result<Relationship> {
        self.require_ready()?;
        let table = self.table()?;
        if a == b {
            return Err(Error::Validation("a relationship needs two different features".into()));
        }
        let edge = self.graph().and_then(|g| {
            g.edges
                .iter()
                .find(|e| (e.src == a && e.dst == b) || (e.src == b && e.dst == a))
                .cloned()
        });
        let (cause, effect) = match &edge {
            Some(e) => (e.src.as_str(), e.dst.as_str()),
            None => (a, b),
        };
        let gc = Grouping::of(table, cause)?;
        let ge = Grouping::of(table, effect)?;
        let outcomes: Vec<Option<bool>> = match self.view_predictions(view)? {
            Some(p) => p,
            None => table.outcomes()?.into_iter().map(Some).collect(),
        };
        let (nc, ne) = (gc.labels.len(), ge.labels.len());
        let mut counts = vec![vec![0usize; ne]; nc];
        let mut positives = vec![vec![0usize; ne]; nc];
        let mut defined = vec![vec![0usize; ne]; nc];
        for r in 0..table.n_rows() {
            if let (Some(i), Some(j)) = (gc.assignment[r], ge.assignment[r]) {
                counts[i][j] += 1;
                if let Some(o) = outcomes[r] {
                    defined[i][j] += 1;
                    positives[i][j] += usize::from(o);
                }
            }
        }
        let groups = (0..nc)
            .map(|i| {
                let total: usize = counts[i].iter().sum();
                RelationshipGroup {
                    cause_value: gc.labels[i].clone(),
                    count: total,
                    segments: (0..ne)
                        .map(|j| RelationshipSegment {
                            effect_value: ge.labels[j].clone(),
                            count: counts[i][j],
                            percent: if total > 0 {
                                100.0 * counts[i][j] as f64 / total as f64
                            } else {
                                0.0
                            },
                            acceptance_rate: (defined[i][j] > 0)
                                .then(|| positives[i][j] as f64 / defined[i][j] as f64),
                        })
                        .collect(),
                }
            })
            .collect();
        Ok(Relationship {
            view,
            cause: cause.to_string(),
            effect: effect.to_string(),
            strength: edge.map(|e| e.strength),
            groups,
        })
    }

    /// Saved combinations as ordered cards.
    pub fn cards(&self, view: View) -> Result<Vec<SubgroupCard>> {
        self.require_ready()?;
        let table = self.table()?;
        let predictions = self.view_predictions(view)?;
        let cards = self
            .combinations
            .iter()
            .map(|c| {
                let mut card = build_card(table, c, predictions.as_deref())?;
                card.unfair = self.flagged_cards.contains(&c.id);
                Ok(card)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(order_cards(apply_min_support(cards, self.settings.min_support)))
    }

    pub fn dataset_page(&self, view: View, query: &DatasetQuery) -> Result<DatasetPage> {
        self.require_ready()?;
        let table = self.table()?;
        if query.page_size == 0 || query.page_size > MAX_PAGE_SIZE {
            return Err(Error::Validation(format!(
                "page_size must be between 1 and {MAX_PAGE_SIZE}"
            )));
        }
        let model = match view {
            View::Model => Some(self.require_model()?),
            View::Dataset => None,
        };
        let mut rows = filter_rows(table, &query.filters)?;
        if let Some(key) = &query.sort {
            let col = table.column(&key.feature)?;
            // missing cells sort last in both directions
            rows.sort_by(|&x, &y| {
                let ord = match col.kind() {
                    ColumnKind::Numeric => match (col.number(x), col.number(y)) {
                        (Some(a), Some(b)) => {
                            let o = a.total_cmp(&b);
                            if key.descending { o.reverse() } else { o }
                        }
                        (a, b) => a.is_none().cmp(&b.is_none()),
                    },
                    ColumnKind::Categorical => match (col.code(x), col.code(y)) {
                        (Some(a), Some(b)) => {
                            let o = a.cmp(&b);
                            if key.descending { o.reverse() } else { o }
                        }
                        (a, b) => a.is_none().cmp(&b.is_none()),
                    },
                };
                ord.then(x.cmp(&y))
            });
        }
        let total = rows.len();
        let page_rows = rows
            .into_iter()
            .skip(query.page.saturating_mul(query.page_size))
            .take(query.page_size)
            .map(|r| DatasetRow {
                id: r,
                cells: table.columns().iter().map(|c| cell_json(c.cell(r))).collect(),
                prediction: model.and_then(|m| {
                    m.predictions[r].as_ref().map(|p| PredictionCell {
                        label: p.label.clone(),
                        p: p.p,
                        confidence: p.confidence,
                    })
                }),
            })
            .collect();
        Ok(DatasetPage {
            view,
            total,
            page: query.page,
            page_size: query.page_size,
            columns: table.column_names(),
            rows: page_rows,
        })
    }

    pub fn application(&self, row: usize, view: View) -> Result<Application> {
        self.require_ready()?;
        let table = self.table()?;
        if row >= table.n_rows() {
            return Err(Error::NotFound(format!(
                "row {row} (table has {} rows)",
                table.n_rows()
            )));
        }
        let labels = table.outcomes()?;
        let outcome = if labels[row] {
            table.positive_label()
        } else {
            table.negative_label()
        };
        let (prediction, contribution) = match view {
            View::Dataset => (None, None),
            View::Model => {
                let m = self.require_model()?;
                (
                    m.predictions[row].clone(),
                    contributions(&m.artifact, table, row)?,
                )
            }
        };
        Ok(Application {
            id: row,
            view,
            values: table
                .feature_names()
                .into_iter()
                .map(|f| {
                    let cell = table.column(&f).map(|c| cell_json(c.cell(row)));
                    cell.map(|value| FeatureValue { feature: f, value })
                })
                .collect::<Result<_>>()?,
            outcome: outcome.unwrap_or_default().to_string(),
            prediction,
            contributions: contribution,
        })
    }

    pub fn scatter(&self, row: usize, view: View) -> Result<Scatter> {
        self.require_ready()?;
        let index = self.similarity_index()?;
        let predictions = match view {
            View::Model => Some(&self.require_model()?.predictions),
            View::Dataset => None,
        };
        scatter(&index, self.table()?, row, view, predictions.map(|p| p.as_slice()))
    }

    pub fn compare(&self, a: usize, b: usize) -> Result<PairComparison> {
        self.require_ready()?;
        compare_pair(self.table()?, a, b)
    }

    pub fn predictions(&self) -> Result<Vec<Option<Prediction>>> {
        Ok(self.require_model()?.predictions.clone())
    }
}
