use std::fmt;
use std::rc::Rc;

use super::{Result, Tensor, TensorError};

/// A differentiable function recorded on the tape.
///
/// `backward` receives the forward inputs, the forward output and the
/// upstream gradient, and returns one optional gradient per input. `None`
/// means the input receives no gradient from this node.
pub trait Function: fmt::Debug {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_output: &[f64]) -> Vec<Option<Vec<f64>>>;
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    func: Option<Rc<dyn Function>>,
    inputs: Vec<Var>,
    tracked: bool,
}

/// Linear record of executed functions. Nodes are appended in execution
/// order, so every node's inputs precede it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Records a leaf. It is tracked for gradients iff `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let tracked = value.requires_grad();
        self.push(Node { value, func: None, inputs: Vec::new(), tracked })
    }

    /// Records an untracked leaf.
    pub fn constant(&mut self, mut value: Tensor) -> Var {
        value.set_requires_grad(false);
        self.leaf(value)
    }

    pub fn apply<F: Function + 'static>(&mut self, func: F, inputs: &[Var]) -> Result<Var> {
        self.apply_rc(Rc::new(func), inputs)
    }

    pub fn apply_rc(&mut self, func: Rc<dyn Function>, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let out = func.forward(&values)?;
        if !out.is_finite() {
            return Err(TensorError::NonFinite { op: func.name().to_string() });
        }
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        Ok(self.push(Node { value: out, func: Some(func), inputs: inputs.to_vec(), tracked }))
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of recorded function applications that carry gradient.
    pub fn tracked_ops(&self) -> usize {
        self.nodes.iter().filter(|n| n.tracked && n.func.is_some()).count()
    }

    pub fn is_tracked(&self, var: Var) -> bool {
        self.nodes[var.0].tracked
    }

    /// Reverse sweep from a scalar `loss`. Every tracked leaf receives a
    /// gradient, zero-filled when the loss does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(TensorError::NotScalar(loss_node.value.shape().to_vec()));
        }
        if self.tracked_ops() == 0 || !loss_node.tracked {
            return Err(TensorError::EmptyTape);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(func) = node.func.as_ref() else { continue };
            if !node.tracked {
                continue;
            }
            let Some(upstream) = grads[idx].take() else { continue };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = func.backward(&inputs, &node.value, &upstream);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", func.name());
            for (var, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[var.0].tracked {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[idx] = Some(upstream);
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.tracked && node.func.is_none() && grads[idx].is_none() {
                grads[idx] = Some(vec![0.0; node.value.numel()]);
            }
        }
        Ok(Gradients { grads })
    }

    /// Re-executes every recorded function against the recorded leaves.
    pub fn replay(&self) -> Result<Tape> {
        let mut out = Tape::new();
        for node in &self.nodes {
            match &node.func {
                None => {
                    out.push(Node { value: node.value.clone(), func: None, inputs: Vec::new(), tracked: node.tracked });
                }
                Some(func) => {
                    out.apply_rc(Rc::clone(func), &node.inputs)?;
                }
            }
        }
        Ok(out)
    }
}

/// Gradients of a scalar with respect to tape values.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `var`, zero-filled to `len` when untracked.
    pub fn wrt_or_zeros(&self, var: Var, len: usize) -> Vec<f64> {
        self.wrt(var).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    }

    /// Writes the gradient of `var` into the tensor's grad slot.
    pub fn populate(&self, var: Var, tensor: &mut Tensor) -> Result<()> {
        let g = self.wrt_or_zeros(var, tensor.numel());
        tensor.set_grad(g)
    }
}
