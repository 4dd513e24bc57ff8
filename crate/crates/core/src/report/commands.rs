use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    export_dot, from_toml, load_data, parse_config, write_toml, ErrorRecord, FixedGraphFile, ParsedConfig,
    ReportError, RunReport,
};
use crate::graph::GraphDesc;
use crate::train::{run_pipeline, Mode, Objective};

#[derive(Debug, Clone, Default)]
pub struct AdaptOptions {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub objective: Option<Objective>,
    pub arch_epochs: Option<usize>,
    pub total_epochs: Option<usize>,
    /// `key=value` overrides of config fields, applied before the flags above.
    pub overrides: Vec<String>,
    pub out_dir: PathBuf,
}

impl AdaptOptions {
    fn all_overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(s) = self.seed {
            o.push(format!("train.seed={s}"));
        }
        if let Some(m) = self.mode {
            o.push(format!("train.mode=\"{m}\""));
        }
        if let Some(obj) = self.objective {
            o.push(format!("train.objective=\"{obj}\""));
        }
        if let Some(a) = self.arch_epochs {
            o.push(format!("train.arch_epochs={a}"));
        }
        if let Some(t) = self.total_epochs {
            o.push(format!("train.total_epochs={t}"));
        }
        o
    }
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub report: RunReport,
    pub report_path: PathBuf,
    pub graph_path: PathBuf,
    pub notes: Vec<String>,
}

pub const REPORT_FILE: &str = "report.toml";
pub const FIXED_GRAPH_FILE: &str = "fixed_graph.toml";
pub const ERROR_FILE: &str = "error.toml";

fn create_dir(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })
}

/// Parses the config, runs the pipeline and writes `report.toml` and
/// `fixed_graph.toml` into `opts.out_dir`. On failure `error.toml` is
/// written there instead and the error is returned.
pub fn adapt(config: &Path, opts: &AdaptOptions) -> Result<AdaptOutcome, ReportError> {
    let result = adapt_inner(config, opts);
    if let Err(e) = &result {
        if create_dir(&opts.out_dir).is_ok() {
            let _ = write_toml(&ErrorRecord::from(e), &opts.out_dir.join(ERROR_FILE));
        }
    }
    result
}

fn adapt_inner(config: &Path, opts: &AdaptOptions) -> Result<AdaptOutcome, ReportError> {
    let parsed = parse_config(config, &opts.all_overrides())?;
    let data = load_data(&parsed.config.data)?;
    let (graph, report) = run_pipeline(parsed.graph, &data, &parsed.config.train)?;
    create_dir(&opts.out_dir)?;
    let stale = opts.out_dir.join(ERROR_FILE);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|source| ReportError::Io { path: stale.clone(), source })?;
    }
    let report_path = opts.out_dir.join(REPORT_FILE);
    let graph_path = opts.out_dir.join(FIXED_GRAPH_FILE);
    write_toml(&report, &report_path)?;
    write_toml(&FixedGraphFile::from_graph(&graph), &graph_path)?;
    Ok(AdaptOutcome { report, report_path, graph_path, notes: parsed.notes })
}

/// Parses and validates a config without training.
pub fn validate(config: &Path, overrides: &[String]) -> Result<ParsedConfig, ReportError> {
    parse_config(config, overrides)
}

#[derive(Deserialize)]
struct WithGraph {
    graph: GraphDesc,
}

/// DOT text for a config, fixed-graph file or run report.
pub fn export_dot_file(path: &Path) -> Result<String, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    let table: toml::Table = from_toml(&text, path)?;
    let desc = if table.contains_key("stages") {
        from_toml::<RunReport>(&text, path)?.fixed_graph
    } else if table.contains_key("graph") {
        from_toml::<WithGraph>(&text, path)?.graph
    } else {
        return Err(ReportError::ParseFailure {
            path: path.to_path_buf(),
            message: "expected a [graph] table or a run report".into(),
        });
    };
    Ok(export_dot(&desc))
}
