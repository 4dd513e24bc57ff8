//! Run artifacts: experiment configs, run and aggregate reports, fixed
//! graph files, error records and DOT export. Every file is TOML with a
//! `schema_version` key.

mod aggregate;
mod commands;
mod config;
mod dot;

pub use aggregate::{aggregate, aggregate_by_method, method_label, render_table, AggregateReport, MethodStats};
pub use commands::{adapt, export_dot_file, validate, AdaptOptions, AdaptOutcome};
pub use config::{apply_override, load_data, parse_config, parse_config_str, DataSpec, ExperimentConfig, ParsedConfig};
pub use dot::export_dot;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ArchGraph, Costs, EdgeDecision, GraphDesc, GraphError, GraphWarning};
use crate::tensor::{seeded_rng, Tensor};
use crate::train::{StageRecord, TrainConfig, TrainError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{}: {message}", location(path, *line, key.as_deref()))]
    ConfigInvalid { path: PathBuf, line: Option<usize>, key: Option<String>, message: String },
    #[error("{}: {source}", location(path, *line, key.as_deref()))]
    Graph { path: PathBuf, line: Option<usize>, key: Option<String>, source: GraphError },
    #[error("data missing: {0}")]
    DataMissing(String),
    #[error("invalid data: {0}")]
    DataInvalid(String),
    #[error("{path}: {message}")]
    ParseFailure { path: PathBuf, message: String },
    #[error("inconsistent reports: {0}")]
    InconsistentConfigs(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn location(path: &Path, line: Option<usize>, key: Option<&str>) -> String {
    let mut s = path.display().to_string();
    if let Some(l) = line {
        s.push_str(&format!(":{l}"));
    }
    if let Some(k) = key {
        s.push_str(&format!(" ({k})"));
    }
    s
}

impl ReportError {
    /// Stable name written to error records.
    pub fn kind(&self) -> &'static str {
        match self {
            ReportError::ConfigInvalid { .. } => "ConfigInvalid",
            ReportError::Graph { source, .. } => match source {
                GraphError::UnknownOpKind { .. } => "UnknownOpKind",
                GraphError::CyclicGraph { .. } => "CyclicGraph",
                GraphError::ShapeInference { .. } => "ShapeInferenceFailure",
                GraphError::MissingField { .. } => "MissingField",
                GraphError::TemplateMismatch(_) => "TemplateMismatch",
                _ => "ConfigInvalid",
            },
            ReportError::DataMissing(_) => "DataMissing",
            ReportError::DataInvalid(_) => "DataInvalid",
            ReportError::ParseFailure { .. } => "ParseFailure",
            ReportError::InconsistentConfigs(_) => "InconsistentConfigs",
            ReportError::Io { .. } => "Io",
            ReportError::Train(TrainError::NonFinite { .. }) => "NonFinite",
            ReportError::Train(_) => "TrainingFailed",
        }
    }

    fn line(&self) -> Option<usize> {
        match self {
            ReportError::ConfigInvalid { line, .. } | ReportError::Graph { line, .. } => *line,
            _ => None,
        }
    }

    fn key(&self) -> Option<String> {
        match self {
            ReportError::ConfigInvalid { key, .. } | ReportError::Graph { key, .. } => key.clone(),
            _ => None,
        }
    }
}

/// Machine-readable failure written next to where a report would go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub schema_version: u32,
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
}

impl From<&ReportError> for ErrorRecord {
    fn from(e: &ReportError) -> Self {
        ErrorRecord {
            schema_version: SCHEMA_VERSION,
            kind: e.kind().to_string(),
            message: e.to_string(),
            line: e.line(),
            key: e.key(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub model: String,
    pub dataset: String,
    pub metric: String,
    pub final_metric: f64,
    pub wall_seconds: f64,
    pub cost_before: Costs,
    pub cost_after: Costs,
    pub config: TrainConfig,
    pub warnings: Vec<GraphWarning>,
    pub discretization: Vec<EdgeDecision>,
    pub stages: Vec<StageRecord>,
    pub fixed_graph: GraphDesc,
}

impl RunReport {
    /// The report with every wall-clock field zeroed.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        r.wall_seconds = 0.0;
        for s in &mut r.stages {
            s.wall_seconds = 0.0;
        }
        r
    }
}

/// Structure and weights of a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedGraphFile {
    pub schema_version: u32,
    pub graph: GraphDesc,
    pub weights: Vec<Tensor>,
}

impl FixedGraphFile {
    pub fn from_graph(graph: &ArchGraph) -> Self {
        FixedGraphFile { schema_version: SCHEMA_VERSION, graph: graph.to_desc(), weights: graph.weights.clone() }
    }

    /// Rebuilds the graph and restores its weights.
    pub fn to_graph(&self) -> Result<ArchGraph, ReportError> {
        let bad = |message: String| ReportError::ParseFailure { path: PathBuf::from("<fixed graph>"), message };
        let (mut graph, _) = ArchGraph::build(&self.graph, &mut seeded_rng(0)).map_err(|e| bad(e.to_string()))?;
        if graph.weights.len() != self.weights.len()
            || graph.weights.iter().zip(&self.weights).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(bad("stored weights do not match the graph structure".into()));
        }
        graph.weights = self.weights.clone();
        Ok(graph)
    }
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String, ReportError> {
    toml::to_string(value)
        .map_err(|e| ReportError::ParseFailure { path: PathBuf::from("<serialize>"), message: e.to_string() })
}

pub fn from_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, ReportError> {
    toml::from_str(text).map_err(|e| ReportError::ParseFailure { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    from_toml(&text, path)
}

pub fn write_toml<T: Serialize>(value: &T, path: &Path) -> Result<(), ReportError> {
    let text = to_toml(value)?;
    fs::write(path, text).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}
