//! Investigation sessions: the setup wizard, user mutations, engine caches,
//! and JSON snapshots on disk.

mod report;
mod views;

pub use report::*;
pub use views::*;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{
    predict_all, split, train_logistic, LogisticConfig, ModelArtifact, Prediction, Split,
    SplitSpec, LOGISTIC_FAMILY,
};
use crate::causal::{learn_feature_graph, CausalGraph, StructureConfig};
use crate::config::Config;
use crate::data::{export_csv, load_csv_with, Constraint, DataTable, InferOptions};
use crate::error::{Error, Result};
use crate::expr::CustomMetricDef;
use crate::metrics::{default_privileged, GroupSpec, GroupSplit, MetricKind};
use crate::similarity::SimilarityIndex;
use crate::subgroup::{build_card, Combination};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    DataScientist,
    DomainExpert,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::DataScientist => "data_scientist",
            Role::DomainExpert => "domain_expert",
        }
    }

    /// Wizard steps shown to this role. Domain experts do not choose the
    /// model, and their metrics step is a fixed SPD-only confirmation.
    pub fn steps(self) -> &'static [Step] {
        match self {
            Role::DataScientist => &[Step::Dataset, Step::Target, Step::Model, Step::Sensitive, Step::Metrics],
            Role::DomainExpert => &[Step::Dataset, Step::Target, Step::Sensitive, Step::Metrics],
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data_scientist" => Ok(Role::DataScientist),
            "domain_expert" => Ok(Role::DomainExpert),
            _ => Err(Error::Validation(format!(
                "unknown role `{s}`; expected data_scientist or domain_expert"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Dataset,
    Target,
    Model,
    Sensitive,
    Metrics,
}

impl Step {
    pub fn as_str(self) -> &'static str {
        match self {
            Step::Dataset => "dataset",
            Step::Target => "target",
            Step::Model => "model",
            Step::Sensitive => "sensitive",
            Step::Metrics => "metrics",
        }
    }
}

/// Engine settings fixed at session creation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub omega: f64,
    pub lambda: f64,
    pub l2: f64,
    pub k_max: usize,
    pub max_constraints: usize,
    pub min_support: usize,
    pub numeric_threshold: usize,
    pub max_rows: usize,
}

impl From<&Config> for Settings {
    fn from(c: &Config) -> Self {
        Self {
            omega: c.omega,
            lambda: c.lambda,
            l2: c.l2,
            k_max: c.k_max,
            max_constraints: c.max_constraints,
            min_support: c.min_support,
            numeric_threshold: c.numeric_threshold,
            max_rows: c.max_rows,
        }
    }
}

impl Default for Settings {
    fn default() -> Self {
        Self::from(&Config::default())
    }
}

impl Settings {
    pub fn structure(&self) -> StructureConfig {
        StructureConfig {
            l1_penalty: self.lambda,
            edge_threshold: self.omega,
            ..StructureConfig::default()
        }
    }

    pub fn infer_options(&self) -> InferOptions {
        InferOptions {
            numeric_threshold: self.numeric_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Upload { name: Option<String> },
    Synth { seed: u64, rows: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub feature: String,
    pub positive: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub family: String,
    pub l2: f64,
    pub split: SplitSpec,
}

impl ModelSpec {
    pub fn with_l2(l2: f64) -> Self {
        Self {
            family: LOGISTIC_FAMILY.to_string(),
            l2,
            split: SplitSpec::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.family != LOGISTIC_FAMILY {
            return Err(Error::Validation(format!(
                "unknown model family `{}`; available: {LOGISTIC_FAMILY}",
                self.family
            )));
        }
        LogisticConfig {
            l2: self.l2,
            ..LogisticConfig::default()
        }
        .validate()?;
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Validation("test_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::with_l2(LogisticConfig::default().l2)
    }
}

/// A sensitive feature with its privileged value set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveFeature {
    pub feature: String,
    pub privileged: Vec<String>,
}

/// Request form: `privileged` falls back to the highest-rate value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveInput {
    pub feature: String,
    #[serde(default)]
    pub privileged: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomMetricInput {
    pub name: String,
    pub source_text: String,
}

/// A trained model with its split and per-row predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub artifact: ModelArtifact,
    pub spec: ModelSpec,
    pub split: Split,
    pub fingerprint: String,
    pub predictions: Vec<Option<Prediction>>,
}

impl TrainedModel {
    /// Predicted positive flags per row.
    pub fn flags(&self) -> Vec<Option<bool>> {
        self.predictions.iter().map(|p| p.as_ref().map(|p| p.positive)).collect()
    }
}

/// Inputs for an out-of-lock graph computation.
#[derive(Debug, Clone)]
pub struct GraphJob {
    table: Arc<DataTable>,
    config: StructureConfig,
    pub fingerprint: String,
}

impl GraphJob {
    pub fn run(&self) -> Result<CausalGraph> {
        let mut graph = learn_feature_graph(&self.table, &self.config)?;
        graph.meta.fingerprint = self.fingerprint.clone();
        Ok(graph)
    }
}

/// Inputs for an out-of-lock training run.
#[derive(Debug, Clone)]
pub struct ModelJob {
    table: Arc<DataTable>,
    spec: ModelSpec,
    pub fingerprint: String,
}

impl ModelJob {
    pub fn run(&self) -> Result<TrainedModel> {
        let split = split(&self.table, &self.spec.split)?;
        let cfg = LogisticConfig {
            l2: self.spec.l2,
            ..LogisticConfig::default()
        };
        let artifact = train_logistic(&self.table, &split.train, &cfg)?;
        let predictions = predict_all(&artifact, &self.table)?;
        Ok(TrainedModel {
            artifact,
            spec: self.spec.clone(),
            split,
            fingerprint: self.fingerprint.clone(),
            predictions,
        })
    }
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn table_csv(table: &DataTable) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    export_csv(table, &mut buf)?;
    Ok(buf)
}

/// Metrics offered to domain experts.
pub const DOMAIN_EXPERT_METRICS: [MetricKind; 1] = [MetricKind::Spd];

#[derive(Debug, Clone)]
pub struct SessionState {
    pub id: String,
    pub role: Role,
    pub version: u64,
    pub settings: Settings,
    source: Option<DatasetSource>,
    /// The dataset as loaded, without target designation or derived columns.
    base: Option<Arc<DataTable>>,
    /// Base plus derived columns, with the target set once chosen.
    table: Option<Arc<DataTable>>,
    table_fingerprint: String,
    target: Option<TargetSpec>,
    model_spec: Option<ModelSpec>,
    sensitive_done: bool,
    sensitive: Vec<SensitiveFeature>,
    metrics: Option<Vec<MetricKind>>,
    custom_metrics: Vec<CustomMetricDef>,
    flagged_features: BTreeSet<String>,
    flagged_cards: BTreeSet<String>,
    combinations: Vec<Combination>,
    selected: Option<usize>,
    model: Option<Arc<TrainedModel>>,
    graph: Option<Arc<CausalGraph>>,
    similarity: OnceLock<Arc<SimilarityIndex>>,
}

impl SessionState {
    pub fn new(id: impl Into<String>, role: Role, settings: Settings) -> Self {
        Self {
            id: id.into(),
            role,
            version: 0,
            settings,
            source: None,
            base: None,
            table: None,
            table_fingerprint: String::new(),
            target: None,
            model_spec: match role {
                Role::DataScientist => None,
                Role::DomainExpert => Some(ModelSpec::with_l2(settings.l2)),
            },
            sensitive_done: false,
            sensitive: Vec::new(),
            metrics: match role {
                Role::DataScientist => None,
                Role::DomainExpert => Some(DOMAIN_EXPERT_METRICS.to_vec()),
            },
            custom_metrics: Vec::new(),
            flagged_features: BTreeSet::new(),
            flagged_cards: BTreeSet::new(),
            combinations: Vec::new(),
            selected: None,
            model: None,
            graph: None,
            similarity: OnceLock::new(),
        }
    }

    /// Random 16-hex-digit session id.
    pub fn generate_id() -> String {
        format!("{:016x}", rand::random::<u64>())
    }

    fn bump(&mut self) -> u64 {
        self.version += 1;
        self.version
    }

    // ---- wizard ----

    pub fn step_done(&self, step: Step) -> bool {
        match step {
            Step::Dataset => self.base.is_some(),
            Step::Target => self.target.is_some(),
            Step::Model => self.model_spec.is_some(),
            Step::Sensitive => self.sensitive_done,
            Step::Metrics => self.metrics.is_some(),
        }
    }

    /// Error naming the first incomplete step before `step`.
    fn require_before(&self, step: Step) -> Result<()> {
        for s in self.role.steps() {
            if *s == step {
                return Ok(());
            }
            if !self.step_done(*s) {
                return Err(Error::State(format!(
                    "wizard step `{}` must be completed before `{}`",
                    s.as_str(),
                    step.as_str()
                )));
            }
        }
        Err(Error::State(format!(
            "step `{}` is not part of the {} wizard",
            step.as_str(),
            self.role
        )))
    }

    pub fn is_ready(&self) -> bool {
        self.role.steps().iter().all(|s| self.step_done(*s))
    }

    pub fn require_ready(&self) -> Result<()> {
        match self.role.steps().iter().find(|s| !self.step_done(**s)) {
            None => Ok(()),
            Some(s) => Err(Error::State(format!(
                "session is not ready: wizard step `{}` is incomplete",
                s.as_str()
            ))),
        }
    }

    fn invalidate(&mut self) {
        self.graph = None;
        self.model = None;
    }

    pub fn set_dataset(&mut self, table: DataTable, source: DatasetSource) -> Result<u64> {
        if table.n_rows() > self.settings.max_rows {
            return Err(Error::Validation(format!(
                "dataset has {} rows; the limit is {}",
                table.n_rows(),
                self.settings.max_rows
            )));
        }
        let base = table.with_bin_cap(self.settings.k_max);
        self.table_fingerprint = sha256_hex(&[&table_csv(&base)?]);
        self.similarity = OnceLock::new();
        self.table = Some(Arc::new(base.clone()));
        self.base = Some(Arc::new(base));
        self.source = Some(source);
        self.target = None;
        if self.role == Role::DataScientist {
            self.model_spec = None;
            self.metrics = None;
        }
        self.sensitive_done = false;
        self.sensitive.clear();
        self.custom_metrics.clear();
        self.flagged_features.clear();
        self.flagged_cards.clear();
        self.combinations.clear();
        self.selected = None;
        self.invalidate();
        Ok(self.bump())
    }

    /// Load CSV bytes with the session's inference settings.
    pub fn load_dataset_csv(&mut self, bytes: &[u8], name: Option<String>) -> Result<u64> {
        let table = load_csv_with(bytes, self.settings.infer_options())?;
        self.set_dataset(table, DatasetSource::Upload { name })
    }

    pub fn load_synth(&mut self, seed: u64, rows: usize) -> Result<u64> {
        if rows > self.settings.max_rows {
            return Err(Error::Validation(format!(
                "{rows} rows requested; the limit is {}",
                self.settings.max_rows
            )));
        }
        let table = crate::data::synth_loans(seed, rows)?;
        self.set_dataset(table, DatasetSource::Synth { seed, rows })
    }

    /// Rebuild the working table from the base, derived columns and target.
    fn rebuild_table(
        &self,
        target: Option<&TargetSpec>,
        custom: &[CustomMetricDef],
    ) -> Result<DataTable> {
        let base = self.base()?;
        let mut table = (**base).clone();
        for def in custom {
            let (column, _) = def.derive(&table)?;
            table = table.with_column(column)?;
        }
        if let Some(t) = target {
            table = table.with_target(&t.feature, &t.positive)?;
        }
        Ok(table)
    }

    fn install_table(&mut self, table: DataTable) -> Result<()> {
        let mut csv = table_csv(&table)?;
        if let Some(t) = &self.target {
            csv.extend_from_slice(t.feature.as_bytes());
            csv.push(0);
            csv.extend_from_slice(t.positive.as_bytes());
        }
        self.table_fingerprint = sha256_hex(&[&csv]);
        self.table = Some(Arc::new(table));
        self.similarity = OnceLock::new();
        self.invalidate();
        Ok(())
    }

    pub fn set_target(&mut self, feature: &str, positive: &str) -> Result<u64> {
        self.require_before(Step::Target)?;
        let spec = TargetSpec {
            feature: feature.to_string(),
            positive: positive.to_string(),
        };
        if self.custom_metrics.iter().any(|d| d.name == feature) {
            return Err(Error::Validation(format!(
                "`{feature}` is a derived numeric column and cannot be the target"
            )));
        }
        let table = self.rebuild_table(Some(&spec), &self.custom_metrics)?;
        self.target = Some(spec);
        self.install_table(table)?;
        self.sensitive.retain(|s| s.feature != feature);
        self.flagged_features.remove(feature);
        Ok(self.bump())
    }

    pub fn set_model(&mut self, spec: ModelSpec) -> Result<u64> {
        if self.role == Role::DomainExpert {
            return Err(Error::State(
                "the domain_expert wizard has no model step; the default model is used".into(),
            ));
        }
        self.require_before(Step::Model)?;
        spec.validate()?;
        self.model_spec = Some(spec);
        self.model = None;
        Ok(self.bump())
    }

    fn resolve_sensitive(&self, input: &SensitiveInput) -> Result<SensitiveFeature> {
        let table = self.table()?;
        let target = table.target_name().unwrap_or_default();
        if input.feature == target {
            return Err(Error::Validation(format!(
                "the target `{target}` cannot be marked sensitive"
            )));
        }
        table.column_index(&input.feature)?;
        let spec = match &input.privileged {
            Some(p) => GroupSpec {
                feature: input.feature.clone(),
                privileged: p.clone(),
            },
            None => default_privileged(table, &input.feature)?,
        };
        GroupSplit::resolve(table, &spec, None)?;
        Ok(SensitiveFeature {
            feature: spec.feature,
            privileged: spec.privileged,
        })
    }

    pub fn set_sensitive(&mut self, inputs: &[SensitiveInput]) -> Result<u64> {
        self.require_before(Step::Sensitive)?;
        let mut resolved = Vec::new();
        for input in inputs {
            if resolved.iter().any(|s: &SensitiveFeature| s.feature == input.feature) {
                return Err(Error::Validation(format!(
                    "feature `{}` listed twice",
                    input.feature
                )));
            }
            resolved.push(self.resolve_sensitive(input)?);
        }
        self.sensitive = resolved;
        self.sensitive_done = true;
        Ok(self.bump())
    }

    pub fn set_metrics(&mut self, kinds: &[MetricKind], custom: &[CustomMetricInput]) -> Result<u64> {
        if self.role == Role::DomainExpert {
            return Err(Error::State(
                "metrics are fixed to SPD for the domain_expert role".into(),
            ));
        }
        self.require_before(Step::Metrics)?;
        if kinds.is_empty() && custom.is_empty() {
            return Err(Error::Validation("choose at least one metric".into()));
        }
        let mut kinds = kinds.to_vec();
        kinds.sort();
        kinds.dedup();
        let mut defs = Vec::new();
        for c in custom {
            if defs.iter().any(|d: &CustomMetricDef| d.name == c.name) {
                return Err(Error::Validation(format!(
                    "custom metric `{}` defined twice",
                    c.name
                )));
            }
            defs.push(CustomMetricDef::new(&c.name, &c.source_text)?);
        }
        if defs != self.custom_metrics {
            let table = self.rebuild_table(self.target.as_ref(), &defs)?;
            self.custom_metrics = defs;
            self.install_table(table)?;
        }
        self.metrics = Some(kinds);
        Ok(self.bump())
    }

    // ---- mutations ----

    /// Mark or unmark a feature as sensitive. `privileged` applies only when marking.
    pub fn set_feature_sensitive(
        &mut self,
        feature: &str,
        sensitive: bool,
        privileged: Option<Vec<String>>,
    ) -> Result<u64> {
        self.require_before(Step::Sensitive)?;
        self.table()?.column_index(feature)?;
        if sensitive {
            let resolved = self.resolve_sensitive(&SensitiveInput {
                feature: feature.to_string(),
                privileged,
            })?;
            match self.sensitive.iter_mut().find(|s| s.feature == feature) {
                Some(s) => *s = resolved,
                None => self.sensitive.push(resolved),
            }
        } else {
            self.sensitive.retain(|s| s.feature != feature);
        }
        Ok(self.bump())
    }

    pub fn flag_feature(&mut self, feature: &str, unfair: bool) -> Result<u64> {
        self.require_before(Step::Sensitive)?;
        self.table()?.column_index(feature)?;
        if unfair {
            self.flagged_features.insert(feature.to_string());
        } else {
            self.flagged_features.remove(feature);
        }
        Ok(self.bump())
    }

    pub fn flag_card(&mut self, id: &str, unfair: bool) -> Result<u64> {
        if !self.combinations.iter().any(|c| c.id == id) {
            return Err(Error::NotFound(format!("combination `{id}`")));
        }
        if unfair {
            self.flagged_cards.insert(id.to_string());
        } else {
            self.flagged_cards.remove(id);
        }
        Ok(self.bump())
    }

    pub fn add_combination(&mut self, constraints: Vec<Constraint>) -> Result<(Combination, u64)> {
        self.require_before(Step::Sensitive)?;
        let combination = Combination::new(constraints, self.settings.max_constraints)?;
        build_card(self.table()?, &combination, None)?;
        if !self.combinations.iter().any(|c| c.id == combination.id) {
            self.combinations.push(combination.clone());
        }
        Ok((combination, self.bump()))
    }

    pub fn remove_combination(&mut self, id: &str) -> Result<u64> {
        let before = self.combinations.len();
        self.combinations.retain(|c| c.id != id);
        if self.combinations.len() == before {
            return Err(Error::NotFound(format!("combination `{id}`")));
        }
        self.flagged_cards.remove(id);
        Ok(self.bump())
    }

    pub fn add_custom_metric(&mut self, input: &CustomMetricInput) -> Result<u64> {
        self.require_before(Step::Sensitive)?;
        if self.custom_metrics.iter().any(|d| d.name == input.name) {
            return Err(Error::Validation(format!(
                "custom metric `{}` already exists",
                input.name
            )));
        }
        let mut defs = self.custom_metrics.clone();
        defs.push(CustomMetricDef::new(&input.name, &input.source_text)?);
        let table = self.rebuild_table(self.target.as_ref(), &defs)?;
        self.custom_metrics = defs;
        self.install_table(table)?;
        Ok(self.bump())
    }

    pub fn select_application(&mut self, row: Option<usize>) -> Result<u64> {
        if let Some(r) = row {
            let n = self.table()?.n_rows();
            if r >= n {
                return Err(Error::NotFound(format!("row {r} (table has {n} rows)")));
            }
        }
        self.selected = row;
        Ok(self.bump())
    }

    // ---- engine caches ----

    pub fn graph_job(&self) -> Result<GraphJob> {
        self.require_before(Step::Sensitive)?;
        let config = self.settings.structure();
        Ok(GraphJob {
            table: self.table()?.clone(),
            fingerprint: sha256_hex(&[
                self.table_fingerprint.as_bytes(),
                serde_json::to_string(&config)?.as_bytes(),
            ]),
            config,
        })
    }

    /// Install a finished graph if it still matches the session's inputs.
    pub fn install_graph(&mut self, graph: CausalGraph) -> bool {
        let current = self.graph_job().map(|j| j.fingerprint).ok();
        if current.as_deref() == Some(graph.meta.fingerprint.as_str()) {
            self.graph = Some(Arc::new(graph));
            true
        } else {
            false
        }
    }

    pub fn graph_is_current(&self) -> bool {
        match (&self.graph, self.graph_job()) {
            (Some(g), Ok(job)) => g.meta.fingerprint == job.fingerprint,
            _ => false,
        }
    }

    pub fn ensure_graph(&mut self) -> Result<Arc<CausalGraph>> {
        if !self.graph_is_current() {
            let graph = self.graph_job()?.run()?;
            self.install_graph(graph);
        }
        self.graph
            .clone()
            .ok_or_else(|| Error::State("graph inputs changed during computation".into()))
    }

    pub fn model_job(&self, seed: u64) -> Result<ModelJob> {
        self.require_before(Step::Sensitive)?;
        let mut spec = self
            .model_spec
            .clone()
            .ok_or_else(|| Error::State("wizard step `model` is incomplete".into()))?;
        spec.split.seed = seed;
        Ok(ModelJob {
            table: self.table()?.clone(),
            fingerprint: sha256_hex(&[
                self.table_fingerprint.as_bytes(),
                serde_json::to_string(&spec)?.as_bytes(),
            ]),
            spec,
        })
    }

    /// Install a trained model; counts as a mutation. Stale results are rejected.
    pub fn install_model(&mut self, model: TrainedModel) -> Result<u64> {
        let current = self.model_job(model.spec.split.seed)?;
        if current.fingerprint != model.fingerprint {
            return Err(Error::State(
                "session inputs changed while the model was training".into(),
            ));
        }
        self.model = Some(Arc::new(model));
        Ok(self.bump())
    }

    pub fn train_model(&mut self, seed: u64) -> Result<u64> {
        let model = self.model_job(seed)?.run()?;
        self.install_model(model)
    }

    // ---- accessors ----

    fn base(&self) -> Result<&Arc<DataTable>> {
        self.base
            .as_ref()
            .ok_or_else(|| Error::State("wizard step `dataset` is incomplete".into()))
    }

    pub fn table(&self) -> Result<&Arc<DataTable>> {
        self.table
            .as_ref()
            .ok_or_else(|| Error::State("wizard step `dataset` is incomplete".into()))
    }

    pub fn table_fingerprint(&self) -> &str {
        &self.table_fingerprint
    }

    pub fn source(&self) -> Option<&DatasetSource> {
        self.source.as_ref()
    }

    pub fn target(&self) -> Option<&TargetSpec> {
        self.target.as_ref()
    }

    pub fn model_spec(&self) -> Option<&ModelSpec> {
        self.model_spec.as_ref()
    }

    pub fn sensitive(&self) -> &[SensitiveFeature] {
        &self.sensitive
    }

    pub fn sensitive_spec(&self, feature: &str) -> Option<GroupSpec> {
        self.sensitive.iter().find(|s| s.feature == feature).map(|s| GroupSpec {
            feature: s.feature.clone(),
            privileged: s.privileged.clone(),
        })
    }

    /// Chosen built-in metric kinds (SPD only for domain experts).
    pub fn metrics(&self) -> &[MetricKind] {
        self.metrics.as_deref().unwrap_or(&[])
    }

    pub fn custom_metrics(&self) -> &[CustomMetricDef] {
        &self.custom_metrics
    }

    pub fn flagged_features(&self) -> &BTreeSet<String> {
        &self.flagged_features
    }

    pub fn flagged_cards(&self) -> &BTreeSet<String> {
        &self.flagged_cards
    }

    pub fn combinations(&self) -> &[Combination] {
        &self.combinations
    }

    pub fn selected(&self) -> Option<usize> {
        self.selected
    }

    pub fn graph(&self) -> Option<&Arc<CausalGraph>> {
        self.graph.as_ref().filter(|_| self.graph_is_current())
    }

    pub fn model(&self) -> Option<&Arc<TrainedModel>> {
        self.model.as_ref()
    }

    pub fn require_model(&self) -> Result<&Arc<TrainedModel>> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::State("the model has not been trained yet".into()))
    }

    /// Built on first use after each table change.
    pub fn similarity_index(&self) -> Result<Arc<SimilarityIndex>> {
        if let Some(idx) = self.similarity.get() {
            return Ok(idx.clone());
        }
        let idx = Arc::new(SimilarityIndex::build(self.table()?)?);
        Ok(self.similarity.get_or_init(|| idx).clone())
    }

    // ---- persistence ----

    pub fn snapshot(&self) -> Result<Snapshot> {
        Ok(Snapshot {
            id: self.id.clone(),
            role: self.role,
            version: self.version,
            settings: self.settings,
            source: self.source.clone(),
            dataset_csv: match &self.base {
                Some(b) => Some(String::from_utf8(table_csv(b)?).map_err(|e| {
                    Error::Numerical(format!("dataset export is not UTF-8: {e}"))
                })?),
                None => None,
            },
            target: self.target.clone(),
            model_spec: if self.role == Role::DataScientist {
                self.model_spec.clone()
            } else {
                None
            },
            sensitive_done: self.sensitive_done,
            sensitive: self.sensitive.clone(),
            metrics: if self.role == Role::DataScientist {
                self.metrics.clone()
            } else {
                None
            },
            custom_metrics: self.custom_metrics.clone(),
            flagged_features: self.flagged_features.clone(),
            flagged_cards: self.flagged_cards.clone(),
            combinations: self.combinations.clone(),
            selected: self.selected,
            model: self.model.as_ref().map(|m| SavedModel {
                artifact: m.artifact.clone(),
                spec: m.spec.clone(),
                split: m.split.clone(),
                fingerprint: m.fingerprint.clone(),
            }),
            graph: self.graph().map(|g| (**g).clone()),
        })
    }

    pub fn restore(snap: Snapshot) -> Result<Self> {
        let mut s = Self::new(snap.id, snap.role, snap.settings);
        if let Some(csv) = &snap.dataset_csv {
            let table = load_csv_with(csv.as_bytes(), snap.settings.infer_options())?;
            s.set_dataset(
                table,
                snap.source.clone().unwrap_or(DatasetSource::Upload { name: None }),
            )?;
        }
        s.target = snap.target;
        if s.role == Role::DataScientist {
            s.model_spec = snap.model_spec;
            s.metrics = snap.metrics;
        }
        s.custom_metrics = snap.custom_metrics;
        if s.base.is_some() {
            let table = s.rebuild_table(s.target.as_ref(), &s.custom_metrics)?;
            s.install_table(table)?;
        }
        s.sensitive_done = snap.sensitive_done;
        s.sensitive = snap.sensitive;
        s.flagged_features = snap.flagged_features;
        s.flagged_cards = snap.flagged_cards;
        s.combinations = snap.combinations;
        s.selected = snap.selected;
        if let Some(m) = snap.model {
            let predictions = predict_all(&m.artifact, s.table()?)?;
            s.model = Some(Arc::new(TrainedModel {
                artifact: m.artifact,
                spec: m.spec,
                split: m.split,
                fingerprint: m.fingerprint,
                predictions,
            }));
        }
        if let Some(g) = snap.graph {
            s.install_graph(g);
        }
        s.version = snap.version;
        Ok(s)
    }

    pub fn snapshot_path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("session-{id}.json"))
    }

    /// Write the snapshot atomically (temp file, then rename).
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = Self::snapshot_path(dir, &self.id);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(&self.snapshot()?)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let snap: Snapshot = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::restore(snap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub artifact: ModelArtifact,
    pub spec: ModelSpec,
    pub split: Split,
    pub fingerprint: String,
}

/// On-disk form of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub role: Role,
    pub version: u64,
    pub settings: Settings,
    pub source: Option<DatasetSource>,
    pub dataset_csv: Option<String>,
    pub target: Option<TargetSpec>,
    pub model_spec: Option<ModelSpec>,
    pub sensitive_done: bool,
    pub sensitive: Vec<SensitiveFeature>,
    pub metrics: Option<Vec<MetricKind>>,
    pub custom_metrics: Vec<CustomMetricDef>,
    pub flagged_features: BTreeSet<String>,
    pub flagged_cards: BTreeSet<String>,
    pub combinations: Vec<Combination>,
    pub selected: Option<usize>,
    pub model: Option<SavedModel>,
    pub graph: Option<CausalGraph>,
}
