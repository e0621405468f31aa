//! The exported investigation report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Role, SessionState};
use crate::audit::{feature_importance, FeatureImportance};
use crate::causal::{GraphEdge, GraphMeta, GraphNode};
use crate::data::{summarize_feature, Constraint};
use crate::error::Result;
use crate::expr::CustomMetricDef;
use crate::metrics::{default_privileged, metric_suite, MetricContext, MetricKind, MetricValue, View};

pub const REPORT_FORMAT: u32 = 1;

/// JSON Schema for [`report_json`] output.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCount {
    pub column: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSection {
    pub rows: usize,
    pub columns: usize,
    pub target: String,
    pub positive_label: String,
    pub negative_label: String,
    pub positive_count: usize,
    pub acceptance_rate: f64,
    /// SHA-256 of the working table's CSV export and target.
    pub fingerprint: String,
    /// Columns with at least one missing cell.
    pub missing: Vec<MissingCount>,
    pub derived: Vec<CustomMetricDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveSection {
    pub feature: String,
    pub privileged: Vec<String>,
    pub spd_range: f64,
    pub dataset: Vec<MetricValue>,
    /// Held-out test split; absent until a model is trained.
    pub model: Option<Vec<MetricValue>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSection {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub meta: GraphMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedFeature {
    pub feature: String,
    pub privileged: Option<Vec<String>>,
    /// Dataset-view SPD against the privileged set.
    pub spd: Option<f64>,
    pub spd_range: f64,
    pub sensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedSubgroup {
    pub id: String,
    pub constraints: Vec<Constraint>,
    pub count: usize,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub features: Vec<FlaggedFeature>,
    pub subgroups: Vec<FlaggedSubgroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardSummary {
    pub id: String,
    pub constraints: Vec<Constraint>,
    pub count: usize,
    pub rate: Option<f64>,
    pub unfair: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub family: String,
    pub l2: f64,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub accuracy: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_loss: f64,
    pub intercept: f64,
    pub importance: Vec<FeatureImportance>,
    /// Whole-model Theil index on the test split.
    pub theil: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingsSection {
    pub omega: f64,
    pub lambda: f64,
    pub l2: f64,
    pub k_max: usize,
    pub max_constraints: usize,
    pub min_support: usize,
    pub numeric_threshold: usize,
    /// Formula and policy choices that shape the numbers in this report.
    pub decisions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: u32,
    pub role: Role,
    pub dataset: DatasetSection,
    pub metrics: Vec<MetricKind>,
    pub sensitive: Vec<SensitiveSection>,
    pub graph: GraphSection,
    pub flags: Flags,
    pub combinations: Vec<CardSummary>,
    pub model: Option<ModelSection>,
    pub settings: SettingsSection,
}

fn decisions() -> BTreeMap<String, String> {
    [
        ("bins", "equal-width, k = min(ceil(sqrt(n)), k_max), last bin closed"),
        ("column_kind", "numeric iff every value parses and distinct count > numeric_threshold"),
        ("confidence", "|2p - 1|"),
        ("contributions", "standardized value times weight, summed per feature; depth = |c| / max |c| in the row"),
        ("disparate_impact", "rate(unprivileged) / rate(privileged)"),
        ("encoding", "z-scored numerics; one-hot with first level dropped, then z-scored; constant columns are zero"),
        ("graph_cycles", "2-cycles keep the stronger direction; other cycles drop the weakest closing edges"),
        ("graph_learning", "linear least squares with L1 penalty under the trace-exponential acyclicity constraint; same-feature indicator pairs fixed at zero"),
        ("graph_strength", "max absolute weight over the encoded columns of each feature pair"),
        ("graph_target", "edges leaving the target are reversed toward it"),
        ("missing_cells", "excluded from summaries and metrics; dropped for structure learning and training; mean-imputed for similarity"),
        ("model", "L2-regularized logistic regression, damped Newton from zero, stratified split"),
        ("model_view_metrics", "computed on the held-out test split"),
        ("model_view_summaries", "computed on predictions for every row with complete features"),
        ("pair_similarity", "numeric 1 - |a - b| / range; categorical equality"),
        ("privileged_default", "the single value with the highest recorded acceptance rate"),
        ("row_similarity", "Pearson correlation of encoded rows; constant rows score 1 if equal else 0"),
        ("spd", "rate(unprivileged) - rate(privileged)"),
        ("spd_range", "max minus min acceptance rate over values or bins"),
        ("theil", "benefit b = prediction - label + 1; mean of (b / mu) ln(b / mu)"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn value_of(values: &[MetricValue], kind: MetricKind) -> Option<f64> {
    values.iter().find(|v| v.kind == kind).and_then(|v| v.value)
}

impl SessionState {
    /// Assemble the report. The causal graph must already be current;
    /// see [`SessionState::export_report`].
    pub fn report(&self) -> Result<Report> {
        self.require_ready()?;
        let table = self.table()?;
        let graph_view = self.graph_view(View::Dataset, None)?;
        let labels = table.outcomes()?;
        let positive_count = labels.iter().filter(|&&o| o).count();
        let model = self.model();
        let flags = model.map(|m| m.flags());

        let mut sensitive = Vec::new();
        for s in self.sensitive() {
            let spec = self.sensitive_spec(&s.feature).expect("listed");
            let dataset = metric_suite(&MetricContext::dataset(table), &spec, self.metrics())?;
            let model_values = match (model, &flags) {
                (Some(m), Some(f)) => Some(metric_suite(
                    &MetricContext::model(table, f, &m.split.test),
                    &spec,
                    self.metrics(),
                )?),
                _ => None,
            };
            sensitive.push(SensitiveSection {
                feature: s.feature.clone(),
                privileged: s.privileged.clone(),
                spd_range: summarize_feature(table, &s.feature, None)?.rate_range(),
                dataset,
                model: model_values,
            });
        }

        let mut flagged = Vec::new();
        for f in self.flagged_features() {
            let spec = match self.sensitive_spec(f) {
                Some(s) => Some(s),
                None if table.target_name() != Some(f.as_str()) => default_privileged(table, f).ok(),
                None => None,
            };
            let spd = match &spec {
                Some(g) => metric_suite(&MetricContext::dataset(table), g, &[MetricKind::Spd])
                    .ok()
                    .and_then(|v| value_of(&v, MetricKind::Spd)),
                None => None,
            };
            flagged.push(FlaggedFeature {
                feature: f.clone(),
                privileged: spec.map(|g| g.privileged),
                spd,
                spd_range: summarize_feature(table, f, None)?.rate_range(),
                sensitive: self.sensitive_spec(f).is_some(),
            });
        }

        let cards = self.cards(View::Dataset)?;
        let subgroups = cards
            .iter()
            .filter(|c| c.unfair)
            .map(|c| FlaggedSubgroup {
                id: c.id.clone(),
                constraints: c.constraints.clone(),
                count: c.count,
                rate: c.rate,
            })
            .collect();

        let model_section = match (model, &flags) {
            (Some(m), Some(f)) => {
                let test: Vec<usize> = m.split.test.iter().copied().filter(|&r| f[r].is_some()).collect();
                let correct = test.iter().filter(|&&r| f[r] == Some(labels[r])).count();
                let preds: Vec<bool> = f.iter().map(|p| p.unwrap_or(false)).collect();
                Some(ModelSection {
                    family: m.artifact.family.clone(),
                    l2: m.spec.l2,
                    split_seed: m.spec.split.seed,
                    test_fraction: m.spec.split.test_fraction,
                    train_rows: m.artifact.meta.train_rows,
                    test_rows: test.len(),
                    accuracy: (!test.is_empty()).then(|| correct as f64 / test.len() as f64),
                    converged: m.artifact.meta.converged,
                    iterations: m.artifact.meta.iterations,
                    final_loss: m.artifact.meta.final_loss,
                    intercept: m.artifact.intercept,
                    importance: feature_importance(&m.artifact),
                    theil: crate::metrics::theil_index(&preds, &labels, &test),
                })
            }
            _ => None,
        };

        let s = &self.settings;
        Ok(Report {
            format: REPORT_FORMAT,
            role: self.role,
            dataset: DatasetSection {
                rows: table.n_rows(),
                columns: table.columns().len(),
                target: table.target_name().unwrap_or_default().to_string(),
                positive_label: table.positive_label().unwrap_or_default().to_string(),
                negative_label: table.negative_label().unwrap_or_default().to_string(),
                positive_count,
                acceptance_rate: positive_count as f64 / table.n_rows() as f64,
                fingerprint: self.table_fingerprint().to_string(),
                missing: table
                    .schema()
                    .into_iter()
                    .filter(|c| c.missing_count > 0)
                    .map(|c| MissingCount {
                        column: c.name,
                        count: c.missing_count,
                    })
                    .collect(),
                derived: self.custom_metrics().to_vec(),
            },
            metrics: self.metrics().to_vec(),
            sensitive,
            graph: GraphSection {
                nodes: graph_view.graph.nodes,
                edges: graph_view.graph.edges,
                meta: graph_view.graph.meta,
            },
            flags: Flags {
                features: flagged,
                subgroups,
            },
            combinations: cards
                .into_iter()
                .map(|c| CardSummary {
                    id: c.id,
                    constraints: c.constraints,
                    count: c.count,
                    rate: c.rate,
                    unfair: c.unfair,
                })
                .collect(),
            model: model_section,
            settings: SettingsSection {
                omega: s.omega,
                lambda: s.lambda,
                l2: s.l2,
                k_max: s.k_max,
                max_constraints: s.max_constraints,
                min_support: s.min_support,
                numeric_threshold: s.numeric_threshold,
                decisions: decisions(),
            },
        })
    }

    /// Compute the graph if needed, then assemble the report.
    pub fn export_report(&mut self) -> Result<Report> {
        self.require_ready()?;
        self.ensure_graph()?;
        self.report()
    }
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, sort_keys(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Canonical JSON text: keys sorted at every level, two-space indent,
/// trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let value = sort_keys(serde_json::to_value(value)?);
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn report_json(report: &Report) -> Result<String> {
    canonical_json(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

fn constraint_text(c: &Constraint) -> String {
    match &c.predicate {
        crate::data::Predicate::Equals { value } => format!("{} = {}", c.feature, value),
        crate::data::Predicate::Range { min, max } => format!("{} in [{}, {}]", c.feature, min, max),
    }
}

/// Plain-text rendering of a report.
pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    let w = &mut out;
    let d = &r.dataset;
    let _ = writeln!(w, "FAIRNESS INVESTIGATION REPORT");
    let _ = writeln!(w, "role: {}", r.role);
    let _ = writeln!(w);
    let _ = writeln!(w, "== Dataset ==");
    let _ = writeln!(w, "rows: {}  columns: {}", d.rows, d.columns);
    let _ = writeln!(
        w,
        "target: {} (positive = {}, negative = {})",
        d.target, d.positive_label, d.negative_label
    );
    let _ = writeln!(w, "positive rows: {}  acceptance rate: {:.4}", d.positive_count, d.acceptance_rate);
    if d.missing.is_empty() {
        let _ = writeln!(w, "missing cells: none");
    } else {
        for m in &d.missing {
            let _ = writeln!(w, "missing cells in {}: {}", m.column, m.count);
        }
    }
    for def in &d.derived {
        let _ = writeln!(w, "derived column {} = {}", def.name, def.source_text);
    }
    let _ = writeln!(w, "fingerprint: {}", d.fingerprint);

    let _ = writeln!(w);
    let _ = writeln!(w, "== Metrics by sensitive feature ==");
    let kinds: Vec<&str> = r.metrics.iter().map(|k| k.as_str()).collect();
    let _ = writeln!(w, "chosen: {}", kinds.join(", "));
    if r.sensitive.is_empty() {
        let _ = writeln!(w, "no sensitive features marked");
    }
    for s in &r.sensitive {
        let _ = writeln!(
            w,
            "{} (privileged: {}; spd range {:.4})",
            s.feature,
            s.privileged.join(", "),
            s.spd_range
        );
        for v in &s.dataset {
            let model = s
                .model
                .as_ref()
                .and_then(|m| m.iter().find(|x| x.kind == v.kind))
                .map_or_else(|| "-".to_string(), |x| fmt_opt(x.value));
            let _ = writeln!(w, "  {:<16} dataset {:>10}  model {:>10}", v.kind.as_str(), fmt_opt(v.value), model);
        }
    }

    let _ = writeln!(w);
    let _ = writeln!(w, "== Causal graph ==");
    let m = &r.graph.meta;
    let _ = writeln!(
        w,
        "omega {}  lambda {}  converged {}  h {:e}  rows dropped {}",
        m.omega, m.lambda, m.converged, m.h, m.dropped_rows
    );
    if r.graph.edges.is_empty() {
        let _ = writeln!(w, "no edges");
    }
    for e in &r.graph.edges {
        let _ = writeln!(w, "  {} -> {}  {:.3}", e.src, e.dst, e.strength);
    }
    for (a, b) in &m.reoriented {
        let _ = writeln!(w, "  reoriented toward target: {a} -> {b}");
    }

    let _ = writeln!(w);
    let _ = writeln!(w, "== Flags ==");
    if r.flags.features.is_empty() && r.flags.subgroups.is_empty() {
        let _ = writeln!(w, "none");
    }
    for f in &r.flags.features {
        let _ = writeln!(
            w,
            "feature {}: SPD {} (privileged: {}), spd range {:.4}",
            f.feature,
            fmt_opt(f.spd),
            f.privileged.as_ref().map_or_else(|| "-".to_string(), |p| p.join(", ")),
            f.spd_range
        );
    }
    for s in &r.flags.subgroups {
        let cs: Vec<String> = s.constraints.iter().map(constraint_text).collect();
        let _ = writeln!(w, "subgroup {} [{}]: {} rows, rate {}", s.id, cs.join(" and "), s.count, fmt_opt(s.rate));
    }

    let _ = writeln!(w);
    let _ = writeln!(w, "== Combinations ==");
    if r.combinations.is_empty() {
        let _ = writeln!(w, "none");
    }
    for c in &r.combinations {
        let cs: Vec<String> = c.constraints.iter().map(constraint_text).collect();
        let _ = writeln!(
            w,
            "{}{} [{}]: {} rows, rate {}",
            if c.unfair { "* " } else { "" },
            c.id,
            cs.join(" and "),
            c.count,
            fmt_opt(c.rate)
        );
    }

    let _ = writeln!(w);
    let _ = writeln!(w, "== Model ==");
    match &r.model {
        None => {
            let _ = writeln!(w, "not trained");
        }
        Some(m) => {
            let _ = writeln!(w, "family {}  l2 {}  split seed {}", m.family, m.l2, m.split_seed);
            let _ = writeln!(
                w,
                "train rows {}  test rows {}  test accuracy {}  theil {}",
                m.train_rows,
                m.test_rows,
                fmt_opt(m.accuracy),
                fmt_opt(m.theil)
            );
            let _ = writeln!(w, "converged {} after {} iterations", m.converged, m.iterations);
            let mut imp = m.importance.clone();
            imp.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.feature.cmp(&b.feature)));
            for i in imp.iter().take(10) {
                let _ = writeln!(w, "  {:<24} {:.3}", i.feature, i.importance);
            }
        }
    }

    let _ = writeln!(w);
    let _ = writeln!(w, "== Settings ==");
    let s = &r.settings;
    let _ = writeln!(
        w,
        "omega {}  lambda {}  l2 {}  k_max {}  max constraints {}  min support {}  numeric threshold {}",
        s.omega, s.lambda, s.l2, s.k_max, s.max_constraints, s.min_support, s.numeric_threshold
    );
    for (k, v) in &s.decisions {
        let _ = writeln!(w, "  {k}: {v}");
    }
    out
}
