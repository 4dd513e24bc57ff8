use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};

use super::{ReportError, SCHEMA_VERSION};
use crate::data::{generate_synthetic, load_cifar10, DataError, SyntheticSpec};
use crate::graph::{edge_id, ArchGraph, GraphDesc, GraphError, GraphWarning};
use crate::train::{init_rng, Data, Mode, TrainConfig, TrainError};

fn one() -> u32 {
    SCHEMA_VERSION
}

/// A run config file: graph, training hyperparameters and data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub graph: GraphDesc,
    #[serde(default)]
    pub train: TrainConfig,
    pub data: DataSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Synthetic(SyntheticSpec),
    Cifar10 { dir: PathBuf },
}

/// A validated config and the graph it describes, initialized from the
/// run seed.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub config: ExperimentConfig,
    pub graph: ArchGraph,
    /// Non-fatal observations, such as edges whose candidate set excludes identity.
    pub notes: Vec<String>,
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ParsedConfig, ReportError> {
    let text = fs::read_to_string(path).map_err(|e| ReportError::ConfigInvalid {
        path: path.to_path_buf(),
        line: None,
        key: None,
        message: format!("cannot read config: {e}"),
    })?;
    parse_config_str(&text, path, overrides)
}

/// 1-based line of the key at `path` (dot separated, numeric parts index arrays).
fn key_line(text: &str, path: &str) -> Option<usize> {
    let doc = DeTable::parse(text).ok()?;
    let mut span = doc.span();
    let mut cur: Option<&DeValue<'_>> = None;
    let mut table = Some(doc.get_ref());
    for part in path.split('.') {
        let next = match (table, cur) {
            (Some(t), _) => t.iter().find(|(k, _)| k.get_ref().as_ref() == part).map(|(k, v)| {
                span = k.span();
                v
            }),
            (None, Some(DeValue::Array(a))) => part.parse::<usize>().ok().and_then(|i| a.get(i)).inspect(|v| span = v.span()),
            _ => None,
        }?;
        cur = Some(next.get_ref());
        table = match next.get_ref() {
            DeValue::Table(t) => Some(t),
            _ => None,
        };
    }
    Some(text[..span.start.min(text.len())].matches('\n').count() + 1)
}

fn line_of(text: &str, span: Option<std::ops::Range<usize>>) -> Option<usize> {
    span.map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

/// Sets `key` (dot separated) to `value`, parsed as a TOML value when
/// possible and as a string otherwise.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<(), String> {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed override key '{key}'"));
    }
    set_in_table(table, &parts, parsed, key)
}

fn set_in_table(table: &mut toml::Table, parts: &[&str], value: toml::Value, key: &str) -> Result<(), String> {
    let (head, rest) = parts.split_first().expect("non-empty path");
    if rest.is_empty() {
        table.insert(head.to_string(), value);
        return Ok(());
    }
    let entry = table.entry(head.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    set_in_value(entry, rest, value, key)
}

fn set_in_value(slot: &mut toml::Value, parts: &[&str], value: toml::Value, key: &str) -> Result<(), String> {
    match slot {
        toml::Value::Table(t) => set_in_table(t, parts, value, key),
        toml::Value::Array(a) => {
            let idx: usize = parts[0].parse().map_err(|_| format!("'{}' in '{key}' is not an array index", parts[0]))?;
            let len = a.len();
            let item = a.get_mut(idx).ok_or_else(|| format!("index {idx} in '{key}' is out of range (len {len})"))?;
            if parts.len() == 1 {
                *item = value;
                Ok(())
            } else {
                set_in_value(item, &parts[1..], value, key)
            }
        }
        _ => Err(format!("'{key}' does not name a table or array entry")),
    }
}

fn graph_error_key(desc: &GraphDesc, err: &GraphError) -> Option<String> {
    let edge = match err {
        GraphError::UnknownOpKind { edge, .. }
        | GraphError::MissingField { edge, .. }
        | GraphError::UnknownNode { edge, .. }
        | GraphError::CyclicGraph { edge }
        | GraphError::ShapeInference { edge, .. } => edge,
        GraphError::TemplateMismatch(_) => return Some("graph.cells".into()),
        _ => return None,
    };
    let i = desc.edges.iter().enumerate().position(|(i, e)| edge_id(e, i) == *edge)?;
    Some(format!("graph.edges.{i}"))
}

/// Parses and validates a config document, applying `key=value` overrides.
pub fn parse_config_str(text: &str, path: &Path, overrides: &[String]) -> Result<ParsedConfig, ReportError> {
    let invalid = |line: Option<usize>, key: Option<String>, message: String| ReportError::ConfigInvalid {
        path: path.to_path_buf(),
        line,
        key,
        message,
    };
    let mut config: ExperimentConfig =
        toml::from_str(text).map_err(|e| invalid(line_of(text, e.span()), None, e.message().to_string()))?;
    if !overrides.is_empty() {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| invalid(None, None, e.to_string()))?;
        let mut keys = Vec::new();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| invalid(None, Some(o.clone()), "override must look like key=value".into()))?;
            let k = k.trim();
            apply_override(&mut table, k, v.trim()).map_err(|m| invalid(None, Some(k.to_string()), m))?;
            keys.push(k.to_string());
        }
        config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(None, Some(keys.join(", ")), e.message().to_string()))?;
    }
    if config.schema_version != SCHEMA_VERSION {
        return Err(invalid(
            key_line(text, "schema_version"),
            Some("schema_version".into()),
            format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", config.schema_version),
        ));
    }
    if let Err(e) = config.train.validate() {
        return Err(match e {
            TrainError::InvalidField { field, message } => {
                let key = format!("train.{field}");
                invalid(key_line(text, &key).or_else(|| key_line(text, "train")), Some(key), message)
            }
            other => invalid(None, Some("train".into()), other.to_string()),
        });
    }
    let graph_err = |err: GraphError| {
        let key = graph_error_key(&config.graph, &err);
        ReportError::Graph {
            path: path.to_path_buf(),
            line: key.as_deref().and_then(|k| key_line(text, k)),
            key,
            source: err,
        }
    };
    let (graph, warnings) = ArchGraph::build(&config.graph, &mut init_rng(config.train.seed)).map_err(graph_err)?;
    if config.train.mode == Mode::Cell && config.train.effective_arch_epochs() > 0 {
        let template = config.graph.cells.clone().ok_or_else(|| {
            invalid(key_line(text, "train.mode"), Some("train.mode".into()), "cell mode needs a [graph.cells] template".into())
        })?;
        graph.clone().cell_group_edges(&template).map_err(graph_err)?;
    }
    let notes = warnings.iter().map(GraphWarning::to_string).collect();
    Ok(ParsedConfig { config, graph, notes })
}

/// Materializes the configured datasets.
pub fn load_data(spec: &DataSpec) -> Result<Data, ReportError> {
    let (train, test) = match spec {
        DataSpec::Synthetic(s) => generate_synthetic(s).map_err(|e| ReportError::DataInvalid(e.to_string()))?,
        DataSpec::Cifar10 { dir } => {
            if !dir.is_dir() {
                return Err(ReportError::DataMissing(format!("dataset directory {} does not exist", dir.display())));
            }
            load_cifar10(dir).map_err(|e| match e {
                DataError::FileMissing(_) => ReportError::DataMissing(e.to_string()),
                other => ReportError::DataInvalid(other.to_string()),
            })?
        }
    };
    Ok(Data { train, test })
}
