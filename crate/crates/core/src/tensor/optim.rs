use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam { lr, beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimizerKind::Sgd { lr, momentum }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr, .. } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }
}

/// Per-parameter auxiliary buffers plus the step counter.
///
/// For SGD `first` holds the momentum buffers and `second` is empty; for
/// Adam they hold the first and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, param_lens: &[usize]) -> Self {
        let zeros = || param_lens.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let second = match kind {
            OptimizerKind::Sgd { .. } => Vec::new(),
            OptimizerKind::Adam { .. } => zeros(),
        };
        OptimizerState { kind, first: zeros(), second, step: 0 }
    }

    pub fn for_params(kind: OptimizerKind, params: &[Tensor]) -> Self {
        let lens: Vec<usize> = params.iter().map(Tensor::numel).collect();
        Self::new(kind, &lens)
    }

    pub fn kind(&self) -> &OptimizerKind {
        &self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    /// Dispatches to [`sgd_step`] or [`adam_step`] by kind.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd { .. } => sgd_step(self, params, grads),
            OptimizerKind::Adam { .. } => adam_step(self, params, grads),
        }
    }

    /// Keeps only the buffers of the listed parameter indices, in order.
    pub fn retain(&mut self, keep: &[usize]) {
        let pick = |bufs: &[Vec<f64>]| keep.iter().map(|&i| bufs[i].clone()).collect::<Vec<_>>();
        self.first = pick(&self.first);
        if !self.second.is_empty() {
            self.second = pick(&self.second);
        }
    }

    fn check(&self, op: &'static str, params: &[Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(TensorError::ShapeMismatch {
                op,
                detail: format!(
                    "{} params, {} grads, {} optimizer buffers",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != g.len() || p.numel() != self.first[i].len() {
                return Err(TensorError::ShapeMismatch {
                    op,
                    detail: format!("param {i}: {} values, grad {}, buffer {}", p.numel(), g.len(), self.first[i].len()),
                });
            }
        }
        Ok(())
    }
}

/// `buf <- momentum*buf + g; p <- p - lr*buf`.
pub fn sgd_step(state: &mut OptimizerState, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
    let OptimizerKind::Sgd { lr, momentum } = state.kind else {
        return Err(TensorError::ShapeMismatch { op: "sgd_step", detail: "optimizer state is not SGD".into() });
    };
    state.check("sgd_step", params, grads)?;
    for ((p, g), buf) in params.iter_mut().zip(grads).zip(&mut state.first) {
        for ((pv, gv), bv) in p.data_mut().iter_mut().zip(g).zip(buf.iter_mut()) {
            *bv = momentum * *bv + gv;
            *pv -= lr * *bv;
        }
    }
    state.step += 1;
    Ok(())
}

/// Bias-corrected Adam.
pub fn adam_step(state: &mut OptimizerState, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
    let OptimizerKind::Adam { lr, beta1, beta2, eps } = state.kind else {
        return Err(TensorError::ShapeMismatch { op: "adam_step", detail: "optimizer state is not Adam".into() });
    };
    state.check("adam_step", params, grads)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.first).zip(&mut state.second) {
        for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
