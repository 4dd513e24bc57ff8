use crate::graph::LayerOp;
use crate::tensor::{PrimitiveOp, RunRng, Tape, Tensor, Var};

/// Two-layer projection `Linear(D, D) -> ReLU -> Linear(D, D/2)` used only
/// by the contrastive loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub dim: usize,
    pub params: Vec<Tensor>,
}

impl ProjectionHead {
    pub fn new(dim: usize, rng: &mut RunRng) -> Self {
        let mut params = LayerOp::Linear { in_dim: dim, out_dim: dim }.init_weights(rng);
        params.extend(LayerOp::Linear { in_dim: dim, out_dim: dim / 2 }.init_weights(rng));
        ProjectionHead { dim, params }
    }

    pub fn bind(&self, tape: &mut Tape, grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                let mut t = p.detached();
                t.set_requires_grad(grad);
                tape.leaf(t)
            })
            .collect()
    }

    /// Projected, unit-norm embeddings of `features` (`[M, D]`).
    pub fn project(&self, tape: &mut Tape, vars: &[Var], features: Var) -> crate::tensor::Result<Var> {
        let d = self.dim;
        let h = tape.apply(PrimitiveOp::Linear { in_dim: d, out_dim: d }, &[features, vars[0], vars[1]])?;
        let h = tape.apply(PrimitiveOp::Relu, &[h])?;
        let z = tape.apply(PrimitiveOp::Linear { in_dim: d, out_dim: d / 2 }, &[h, vars[2], vars[3]])?;
        tape.apply(PrimitiveOp::L2Normalize, &[z])
    }
}
