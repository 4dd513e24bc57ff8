use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ReportError, RunReport, SCHEMA_VERSION};
use crate::train::{Mode, Objective};

/// Multi-seed summary of one method. `mean` and `std` are recomputable
/// from `metrics`; `std` uses the `n - 1` denominator and is zero for a
/// single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub model: String,
    pub method: String,
    pub mode: Mode,
    pub objective: Objective,
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub metrics: Vec<f64>,
    pub wall_seconds: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub mean_wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub methods: Vec<MethodStats>,
}

/// Table name of a mode: `Original`, `Ours(Cell)` or `Ours(Full)`.
pub fn method_label(mode: Mode) -> &'static str {
    match mode {
        Mode::Baseline => "Original",
        Mode::Cell => "Ours(Cell)",
        Mode::Full => "Ours(Full)",
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn stats(reports: &[&RunReport]) -> Result<MethodStats, ReportError> {
    let first = reports.first().ok_or_else(|| ReportError::InconsistentConfigs("no reports given".into()))?;
    let mut reference = first.config.clone();
    reference.seed = 0;
    let mut seeds = BTreeSet::new();
    for r in reports {
        let mut c = r.config.clone();
        c.seed = 0;
        if r.model != first.model || r.dataset != first.dataset {
            return Err(ReportError::InconsistentConfigs(format!(
                "model/dataset '{}'/'{}' differs from '{}'/'{}'",
                r.model, r.dataset, first.model, first.dataset
            )));
        }
        if c != reference {
            let what = if c.mode != reference.mode {
                format!("modes {} and {}", c.mode, reference.mode)
            } else if c.objective != reference.objective {
                format!("objectives {} and {}", c.objective, reference.objective)
            } else {
                "training configs differ beyond the seed".to_string()
            };
            return Err(ReportError::InconsistentConfigs(what));
        }
        if !seeds.insert(r.seed) {
            return Err(ReportError::InconsistentConfigs(format!("seed {} appears more than once", r.seed)));
        }
    }
    let metrics: Vec<f64> = reports.iter().map(|r| r.final_metric).collect();
    let wall: Vec<f64> = reports.iter().map(|r| r.wall_seconds).collect();
    let (mean, std) = mean_std(&metrics);
    Ok(MethodStats {
        model: first.model.clone(),
        method: method_label(first.config.mode).to_string(),
        mode: first.config.mode,
        objective: first.config.objective,
        dataset: first.dataset.clone(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        metrics,
        mean,
        std,
        mean_wall_seconds: mean_std(&wall).0,
        wall_seconds: wall,
    })
}

/// Summarizes runs of a single method that differ only in seed.
pub fn aggregate(reports: &[RunReport]) -> Result<AggregateReport, ReportError> {
    let refs: Vec<&RunReport> = reports.iter().collect();
    Ok(AggregateReport { schema_version: SCHEMA_VERSION, methods: vec![stats(&refs)?] })
}

/// Groups reports by model, objective and mode, then summarizes each group.
pub fn aggregate_by_method(reports: &[RunReport]) -> Result<AggregateReport, ReportError> {
    let order = |m: Mode| match m {
        Mode::Baseline => 0,
        Mode::Cell => 1,
        Mode::Full => 2,
    };
    let mut groups: BTreeMap<(String, String, u8), Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.model.clone(), r.config.objective.to_string(), order(r.config.mode)))
            .or_default()
            .push(r);
    }
    if groups.is_empty() {
        return Err(ReportError::InconsistentConfigs("no reports given".into()));
    }
    let methods = groups.values().map(|g| stats(g)).collect::<Result<_, _>>()?;
    Ok(AggregateReport { schema_version: SCHEMA_VERSION, methods })
}

/// Plain-text table with columns Model, Method, Avg Acc, Std, Total Cost.
pub fn render_table(report: &AggregateReport) -> String {
    let header = ["Model", "Method", "Avg Acc (%)", "Std", "Total Cost (s)"];
    let rows: Vec<[String; 5]> = report
        .methods
        .iter()
        .map(|m| {
            [
                m.model.clone(),
                m.method.clone(),
                format!("{:.2}", 100.0 * m.mean),
                format!("{:.2}", 100.0 * m.std),
                format!("{:.1}", m.mean_wall_seconds),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(header.to_vec());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in &rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}
