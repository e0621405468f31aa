use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairscope_cli::{learn_graph, run_report, write_synth, ReportPlan};
use fairscope_core::config::Config;
use fairscope_core::metrics::MetricKind;
use fairscope_core::session::{canonical_json, Role, SensitiveInput};
use fairscope_core::Error;

/// Fairness investigation workbench: headless pipeline and API server.
#[derive(Parser)]
#[command(name = "fairscope", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic loan-application dataset as CSV.
    Synth {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline and write report.json, report.txt and graph.json.
    Report {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        /// Target value counted as the favourable outcome.
        #[arg(long)]
        positive: String,
        /// Comma-separated sensitive features.
        #[arg(long, value_delimiter = ',')]
        sensitive: Vec<String>,
        /// Privileged values, as FEATURE=V1|V2. Defaults to the value with
        /// the highest acceptance rate.
        #[arg(long)]
        privileged: Vec<String>,
        /// Comma-separated metric kinds (SPD, EqOppDiff, AvgOddsDiff,
        /// DisparateImpact, Theil).
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        #[arg(long, default_value = "data_scientist")]
        role: String,
        /// Split seed for the decision model.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip model training; the report then covers the dataset only.
        #[arg(long)]
        no_model: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn the feature graph of a CSV and print or write it as JSON.
    Graph {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, requires = "positive")]
        target: Option<String>,
        #[arg(long, requires = "target")]
        positive: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config, Error> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Validation(format!("cannot read {}: {e}", p.display())))?;
            Config::from_toml(&text)
        }
        None => Ok(Config::default()),
    }
}

fn sensitive_inputs(features: &[String], privileged: &[String]) -> Result<Vec<SensitiveInput>, Error> {
    let mut inputs: Vec<SensitiveInput> = features
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| SensitiveInput {
            feature: f.clone(),
            privileged: None,
        })
        .collect();
    for spec in privileged {
        let (feature, values) = spec.split_once('=').ok_or_else(|| {
            Error::Validation(format!("--privileged expects FEATURE=V1|V2, got `{spec}`"))
        })?;
        let values: Vec<String> = values.split('|').map(String::from).collect();
        match inputs.iter_mut().find(|i| i.feature == feature) {
            Some(i) => i.privileged = Some(values),
            None => inputs.push(SensitiveInput {
                feature: feature.to_string(),
                privileged: Some(values),
            }),
        }
    }
    Ok(inputs)
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth { seed, rows, out } => {
            write_synth(seed, rows, &out)?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::Report {
            data,
            target,
            positive,
            sensitive,
            privileged,
            metrics,
            role,
            seed,
            no_model,
            config,
            out,
        } => {
            let plan = ReportPlan {
                data,
                target,
                positive,
                role: role.parse::<Role>()?,
                sensitive: sensitive_inputs(&sensitive, &privileged)?,
                metrics: metrics
                    .iter()
                    .filter(|m| !m.is_empty())
                    .map(|m| m.parse::<MetricKind>())
                    .collect::<Result<_, _>>()?,
                train_seed: (!no_model).then_some(seed),
                config: load_config(config.as_deref())?,
            };
            let (report, files) = run_report(&plan, &out)?;
            println!(
                "{} rows, acceptance rate {:.4}, {} graph edges",
                report.dataset.rows,
                report.dataset.acceptance_rate,
                report.graph.edges.len()
            );
            for s in &report.sensitive {
                for m in &s.dataset {
                    let value = m.value.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"));
                    println!("{} {}: {value}", s.feature, m.kind);
                }
            }
            for f in [&files.json, &files.text, &files.graph] {
                println!("wrote {}", f.display());
            }
        }
        Command::Graph {
            data,
            omega,
            lambda,
            target,
            positive,
            config,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(o) = omega {
                cfg.omega = o;
            }
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            cfg.validate()?;
            let target = target.as_deref().zip(positive.as_deref());
            let graph = learn_graph(&data, target, &cfg)?;
            let text = canonical_json(&graph)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, text)?;
                    println!("{} edges; wrote {}", graph.edges.len(), path.display());
                }
                None => print!("{text}"),
            }
        }
        Command::Serve { config, port } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(p) = port {
                cfg.port = p;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(fairscope_server::serve(cfg))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
