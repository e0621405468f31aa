//! Headless pipeline used by the `fairscope` binary.

use std::fs;
use std::path::{Path, PathBuf};

use fairscope_core::causal::{learn_feature_graph, CausalGraph};
use fairscope_core::config::Config;
use fairscope_core::data::{export_csv, load_csv_with, synth_loans, InferOptions};
use fairscope_core::metrics::{MetricKind, View};
use fairscope_core::session::{
    canonical_json, render_text, report_json, ModelSpec, Report, Role, SensitiveInput,
    SessionState, Settings,
};
use fairscope_core::{Error, Result};

/// Inputs of one `report` run.
#[derive(Debug, Clone)]
pub struct ReportPlan {
    pub data: PathBuf,
    pub target: String,
    pub positive: String,
    pub role: Role,
    pub sensitive: Vec<SensitiveInput>,
    pub metrics: Vec<MetricKind>,
    /// Split seed; `None` skips training.
    pub train_seed: Option<u64>,
    pub config: Config,
}

/// Files written by a `report` run.
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub text: PathBuf,
    pub graph: PathBuf,
}

pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))
}

/// Drive a session through the wizard exactly as the API would.
pub fn build_session(plan: &ReportPlan) -> Result<SessionState> {
    let mut s = SessionState::new("cli", plan.role, Settings::from(&plan.config));
    let name = plan.data.file_name().map(|n| n.to_string_lossy().into_owned());
    s.load_dataset_csv(&read_input(&plan.data)?, name)?;
    s.set_target(&plan.target, &plan.positive)?;
    if plan.role == Role::DataScientist {
        s.set_model(ModelSpec::with_l2(plan.config.l2))?;
    }
    s.set_sensitive(&plan.sensitive)?;
    if plan.role == Role::DataScientist {
        let metrics = if plan.metrics.is_empty() {
            vec![MetricKind::Spd]
        } else {
            plan.metrics.clone()
        };
        s.set_metrics(&metrics, &[])?;
    } else if !plan.metrics.is_empty() && plan.metrics != [MetricKind::Spd] {
        return Err(Error::Validation(
            "the domain_expert role reports SPD only; drop --metrics".into(),
        ));
    }
    if let Some(seed) = plan.train_seed {
        s.train_model(seed)?;
    }
    Ok(s)
}

pub fn run_report(plan: &ReportPlan, out: &Path) -> Result<(Report, ReportFiles)> {
    let mut s = build_session(plan)?;
    // fail on an unusable output location before the graph is learned
    fs::create_dir_all(out)?;
    let report = s.export_report()?;
    let files = ReportFiles {
        json: out.join("report.json"),
        text: out.join("report.txt"),
        graph: out.join("graph.json"),
    };
    fs::write(&files.json, report_json(&report)?)?;
    fs::write(&files.text, render_text(&report))?;
    fs::write(&files.graph, canonical_json(&s.graph_view(View::Dataset, None)?)?)?;
    Ok((report, files))
}

pub fn write_synth(seed: u64, rows: usize, out: &Path) -> Result<()> {
    let table = synth_loans(seed, rows)?;
    let mut buf = Vec::new();
    export_csv(&table, &mut buf)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, buf)?;
    Ok(())
}

/// Learn the feature graph of a CSV. With a target, edges leaving it are
/// reoriented and nodes carry acceptance-rate ranges.
pub fn learn_graph(
    data: &Path,
    target: Option<(&str, &str)>,
    config: &Config,
) -> Result<CausalGraph> {
    let opts = InferOptions {
        numeric_threshold: config.numeric_threshold,
    };
    let mut table = load_csv_with(read_input(data)?.as_slice(), opts)?.with_bin_cap(config.k_max);
    if let Some((feature, positive)) = target {
        table = table.with_target(feature, positive)?;
    }
    learn_feature_graph(&table, &config.structure())
}
