//! Serializable description of a graph, shared by configs and fixed-graph
//! files.

use serde::{Deserialize, Serialize};

use super::edge::OpChoice;
use super::layer::LayerOp;
use super::GraphError;
use crate::tensor::ConvSpec;

fn default_name() -> String {
    "graph".to_string()
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDesc {
    #[serde(default = "default_name")]
    pub name: String,
    pub input: String,
    pub output: String,
    /// Per-sample input shape, e.g. `[3, 16, 16]`.
    pub input_shape: Vec<usize>,
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeDesc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<CellTemplate>,
}

/// Repeated cells, each listing its edge ids in positional order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellTemplate {
    pub instances: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDesc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub from: String,
    pub to: String,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub free: bool,
    /// Set on fixed graphs: the decision taken for this (formerly free) edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<OpChoice>,
}

pub const OP_KINDS: &[&str] = &["conv2d", "linear", "relu", "identity", "global_avg_pool", "l2_normalize", "noise"];

impl EdgeDesc {
    pub fn new(from: &str, to: &str, op: &str) -> Self {
        EdgeDesc {
            id: None,
            from: from.to_string(),
            to: to.to_string(),
            op: op.to_string(),
            kernel: None,
            stride: None,
            padding: None,
            out_channels: None,
            out_features: None,
            sigma: None,
            seed: None,
            free: false,
            choice: None,
        }
    }

    pub fn conv(from: &str, to: &str, kernel: usize, stride: usize, padding: usize, out_channels: usize) -> Self {
        EdgeDesc {
            kernel: Some(kernel),
            stride: Some(stride),
            padding: Some(padding),
            out_channels: Some(out_channels),
            ..EdgeDesc::new(from, to, "conv2d")
        }
    }

    pub fn linear(from: &str, to: &str, out_features: usize) -> Self {
        EdgeDesc { out_features: Some(out_features), ..EdgeDesc::new(from, to, "linear") }
    }

    pub fn noise(from: &str, to: &str, sigma: f64, seed: u64) -> Self {
        EdgeDesc { sigma: Some(sigma), seed: Some(seed), ..EdgeDesc::new(from, to, "noise") }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = Some(id.to_string());
        self
    }

    pub fn free(mut self) -> Self {
        self.free = true;
        self
    }

    /// Resolves the op against the per-sample shape of the source node.
    pub fn resolve(&self, edge: &str, input_shape: &[usize]) -> Result<LayerOp, GraphError> {
        let missing = |field: &str| GraphError::MissingField { edge: edge.to_string(), field: field.to_string() };
        let op = match self.op.as_str() {
            "conv2d" => {
                let in_channels = match input_shape {
                    [c, _, _] => *c,
                    _ => {
                        return Err(GraphError::ShapeInference {
                            edge: edge.to_string(),
                            detail: format!("conv2d expects a [C, H, W] input, got {input_shape:?}"),
                        })
                    }
                };
                let k = self.kernel.ok_or_else(|| missing("kernel"))?;
                LayerOp::Conv2d(ConvSpec {
                    kernel_h: k,
                    kernel_w: k,
                    stride: self.stride.unwrap_or(1),
                    padding: self.padding.unwrap_or(0),
                    in_channels,
                    out_channels: self.out_channels.ok_or_else(|| missing("out_channels"))?,
                })
            }
            "linear" => {
                let in_dim = match input_shape {
                    [d] => *d,
                    _ => {
                        return Err(GraphError::ShapeInference {
                            edge: edge.to_string(),
                            detail: format!("linear expects a [D] input, got {input_shape:?}"),
                        })
                    }
                };
                LayerOp::Linear { in_dim, out_dim: self.out_features.ok_or_else(|| missing("out_features"))? }
            }
            "relu" => LayerOp::Relu,
            "identity" => LayerOp::Identity,
            "global_avg_pool" => LayerOp::GlobalAvgPool,
            "l2_normalize" => LayerOp::L2Normalize,
            "noise" => LayerOp::Noise {
                sigma: self.sigma.ok_or_else(|| missing("sigma"))?,
                seed: self.seed.unwrap_or(0),
            },
            other => return Err(GraphError::UnknownOpKind { edge: edge.to_string(), kind: other.to_string() }),
        };
        Ok(op)
    }

    /// Inverse of [`EdgeDesc::resolve`].
    pub fn from_layer(id: &str, from: &str, to: &str, op: &LayerOp) -> Self {
        let base = EdgeDesc::new(from, to, op.kind()).with_id(id);
        match op {
            LayerOp::Conv2d(c) => EdgeDesc {
                kernel: Some(c.kernel_h),
                stride: Some(c.stride),
                padding: Some(c.padding),
                out_channels: Some(c.out_channels),
                ..base
            },
            LayerOp::Linear { out_dim, .. } => EdgeDesc { out_features: Some(*out_dim), ..base },
            LayerOp::Noise { sigma, seed } => EdgeDesc { sigma: Some(*sigma), seed: Some(*seed), ..base },
            _ => base,
        }
    }
}

/// Id of edge `index`: the declared id or `e<index>`.
pub fn edge_id(desc: &EdgeDesc, index: usize) -> String {
    desc.id.clone().unwrap_or_else(|| format!("e{index}"))
}
