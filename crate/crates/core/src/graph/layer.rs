use crate::tensor::{ConvSpec, PrimitiveOp, RunRng, Tensor};
use rand::Rng;

/// The original operation `o(x)` carried by an edge, with its input
/// dimensions resolved by shape inference.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp {
    Conv2d(ConvSpec),
    Linear { in_dim: usize, out_dim: usize },
    Relu,
    Identity,
    GlobalAvgPool,
    L2Normalize,
    /// Frozen additive Gaussian noise, fresh per forward call.
    Noise { sigma: f64, seed: u64 },
}

impl LayerOp {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerOp::Conv2d(_) => "conv2d",
            LayerOp::Linear { .. } => "linear",
            LayerOp::Relu => "relu",
            LayerOp::Identity => "identity",
            LayerOp::GlobalAvgPool => "global_avg_pool",
            LayerOp::L2Normalize => "l2_normalize",
            LayerOp::Noise { .. } => "noise",
        }
    }

    /// Short human label used in DOT export and tables.
    pub fn label(&self) -> String {
        match self {
            LayerOp::Conv2d(c) => format!(
                "conv{}x{} s{} {}->{}",
                c.kernel_h, c.kernel_w, c.stride, c.in_channels, c.out_channels
            ),
            LayerOp::Linear { in_dim, out_dim } => format!("linear {in_dim}->{out_dim}"),
            LayerOp::Noise { sigma, .. } => format!("noise sigma={sigma}"),
            other => other.kind().to_string(),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            LayerOp::Conv2d(c) => match *input {
                [ch, h, w] if ch == c.in_channels => c
                    .output_hw(h, w)
                    .map(|(oh, ow)| vec![c.out_channels, oh, ow])
                    .ok_or_else(|| format!("kernel {}x{} does not fit input {h}x{w}", c.kernel_h, c.kernel_w)),
                _ => Err(format!("conv2d expects [{}, H, W], got {input:?}", c.in_channels)),
            },
            LayerOp::Linear { in_dim, out_dim } => match *input {
                [d] if d == *in_dim => Ok(vec![*out_dim]),
                _ => Err(format!("linear expects [{in_dim}], got {input:?}")),
            },
            LayerOp::GlobalAvgPool => match *input {
                [ch, _, _] => Ok(vec![ch]),
                _ => Err(format!("global_avg_pool expects [C, H, W], got {input:?}")),
            },
            LayerOp::L2Normalize => match *input {
                [_] => Ok(input.to_vec()),
                _ => Err(format!("l2_normalize expects [D], got {input:?}")),
            },
            LayerOp::Relu | LayerOp::Identity | LayerOp::Noise { .. } => Ok(input.to_vec()),
        }
    }

    /// Shapes of the owned weights, in primitive input order.
    pub fn weight_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            LayerOp::Conv2d(c) => vec![c.weight_shape().to_vec(), vec![c.out_channels]],
            LayerOp::Linear { in_dim, out_dim } => vec![vec![*out_dim, *in_dim], vec![*out_dim]],
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> u64 {
        self.weight_shapes().iter().map(|s| s.iter().product::<usize>() as u64).sum()
    }

    /// Multiply-accumulates per sample.
    pub fn macs(&self, input: &[usize]) -> u64 {
        match self {
            LayerOp::Conv2d(c) => {
                let (oh, ow) = c.output_hw(input[1], input[2]).unwrap_or((0, 0));
                (c.out_channels * oh * ow * c.fan_in()) as u64
            }
            LayerOp::Linear { in_dim, out_dim } => (in_dim * out_dim) as u64,
            _ => 0,
        }
    }

    /// Kaiming-uniform weights (`bound = sqrt(6 / fan_in)`), zero biases.
    pub fn init_weights(&self, rng: &mut RunRng) -> Vec<Tensor> {
        let fan_in = match self {
            LayerOp::Conv2d(c) => c.fan_in(),
            LayerOp::Linear { in_dim, .. } => *in_dim,
            _ => return Vec::new(),
        };
        let bound = (6.0 / fan_in as f64).sqrt();
        let shapes = self.weight_shapes();
        let n: usize = shapes[0].iter().product();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        vec![
            Tensor::new(shapes[0].clone(), w).expect("shape matches"),
            Tensor::zeros(&shapes[1]),
        ]
    }

    /// The primitive evaluating this op; `step` selects the noise substream.
    pub fn primitive(&self, step: u64) -> PrimitiveOp {
        match self {
            LayerOp::Conv2d(c) => PrimitiveOp::Conv2d(*c),
            LayerOp::Linear { in_dim, out_dim } => PrimitiveOp::Linear { in_dim: *in_dim, out_dim: *out_dim },
            LayerOp::Relu => PrimitiveOp::Relu,
            LayerOp::Identity => PrimitiveOp::Identity,
            LayerOp::GlobalAvgPool => PrimitiveOp::GlobalAvgPool,
            LayerOp::L2Normalize => PrimitiveOp::L2Normalize,
            LayerOp::Noise { sigma, seed } => PrimitiveOp::NoiseInject { sigma: *sigma, seed: *seed, step },
        }
    }
}
