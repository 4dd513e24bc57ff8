//! The two-stage run: an architecture stage alternating weight and
//! architecture updates on every mini-batch, the discretizing transform,
//! then a weight-only stage on the fixed network.

mod engine;
mod head;

pub use engine::{arch_train_stage, evaluate, network_train_stage, run_pipeline, Session};
pub use head::ProjectionHead;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::graph::{EdgeDecision, GraphError, GraphWarning};
use crate::objectives::{AugmentPolicy, ObjectiveError};
use crate::tensor::{stream_rng, OptimizerKind, RunRng, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid training config field {field}: {message}")]
    InvalidField { field: String, message: String },
    #[error("non-finite value in {stage} epoch {epoch} batch {batch}: {location}")]
    NonFinite { stage: String, epoch: usize, batch: usize, location: String },
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Architecture parameters tied across positionally matching cell edges.
    Cell,
    /// One triple per free edge.
    Full,
    /// Plain training of the original network.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Supervised,
    Simclr,
}

macro_rules! string_enum {
    ($ty:ident { $($var:ident => $s:literal),* }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$var => $s),* }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($s => Ok($ty::$var),)*
                    _ => Err(format!("unknown {} '{s}', expected one of: {}", stringify!($ty).to_lowercase(), [$($s),*].join(", "))),
                }
            }
        }
    };
}

string_enum!(Mode { Cell => "cell", Full => "full", Baseline => "baseline" });
string_enum!(Objective { Supervised => "supervised", Simclr => "simclr" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_epochs: usize,
    /// Defaults to a fifth of `total_epochs` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arch_epochs: Option<usize>,
    pub mode: Mode,
    pub objective: Objective,
    pub batch_size: usize,
    pub seed: u64,
    pub temperature: f64,
    pub knn_k: usize,
    pub w_optimizer: OptimizerKind,
    pub theta_optimizer: OptimizerKind,
    pub augment: AugmentPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_epochs: 10,
            arch_epochs: None,
            mode: Mode::Full,
            objective: Objective::Supervised,
            batch_size: 32,
            seed: 0,
            temperature: 0.5,
            knn_k: 200,
            w_optimizer: OptimizerKind::sgd(0.025, 0.9),
            theta_optimizer: OptimizerKind::adam(3e-4),
            augment: AugmentPolicy::default(),
        }
    }
}

impl TrainConfig {
    /// Architecture epochs actually run; zero in baseline mode.
    pub fn effective_arch_epochs(&self) -> usize {
        match self.mode {
            Mode::Baseline => 0,
            _ => self.arch_epochs.unwrap_or(self.total_epochs / 5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(TrainError::InvalidField { field: field.into(), message });
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if let Some(a) = self.arch_epochs {
            if a > self.total_epochs {
                return bad("arch_epochs", format!("{a} exceeds total_epochs {}", self.total_epochs));
            }
        }
        if self.objective == Objective::Simclr {
            if self.temperature.is_nan() || self.temperature <= 0.0 {
                return bad("temperature", format!("must be positive, got {}", self.temperature));
            }
            if self.knn_k == 0 {
                return bad("knn_k", "must be at least 1".into());
            }
        }
        for (name, opt) in [("w_optimizer.lr", &self.w_optimizer), ("theta_optimizer.lr", &self.theta_optimizer)] {
            if !(opt.lr() >= 0.0 && opt.lr().is_finite()) {
                return bad(name, format!("must be a finite non-negative number, got {}", opt.lr()));
            }
        }
        Ok(())
    }
}

/// Training and held-out data for one run.
#[derive(Debug, Clone)]
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

/// Architecture parameters of one free edge at a stage boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSnapshot {
    pub edge: String,
    pub theta: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub epochs: usize,
    pub epoch_loss: Vec<f64>,
    pub epoch_metric: Vec<f64>,
    pub wall_seconds: f64,
    pub w_updates: u64,
    pub theta_updates: u64,
    pub theta_start: Vec<ThetaSnapshot>,
    pub theta_end: Vec<ThetaSnapshot>,
    pub decisions: Vec<EdgeDecision>,
    pub warnings: Vec<GraphWarning>,
}

pub const ARCH_STAGE: &str = "arch_train";
pub const NETWORK_STAGE: &str = "network_train";

/// RNG for initial graph weights.
pub fn init_rng(seed: u64) -> RunRng {
    stream_rng(seed, 0)
}

pub(crate) fn head_rng(seed: u64) -> RunRng {
    stream_rng(seed, 1)
}

pub(crate) fn batch_rng(seed: u64, epoch: usize) -> RunRng {
    stream_rng(seed, (1 << 32) + epoch as u64)
}

pub(crate) fn augment_rng(seed: u64, epoch: usize) -> RunRng {
    stream_rng(seed, (2 << 32) + epoch as u64)
}
