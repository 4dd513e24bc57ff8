//! Networks as DAGs of mixed edges.
//!
//! Nodes sum their incoming edge outputs. A free edge carries an
//! [`ArchParams`] triple and, in mixed evaluation, computes
//! `theta_none * Z + theta_id * x + theta_same * o(x)` with `Z` the zero
//! tensor of `o(x)`'s shape. Edges that change shape cannot become identity:
//! their `theta_id` is held at zero and ignored by [`discretize`].

mod cost;
mod desc;
mod edge;
mod layer;

pub use cost::Costs;
pub use desc::{edge_id, CellTemplate, EdgeDesc, GraphDesc, OP_KINDS};
pub use edge::{discretize, ArchParams, CandidateSet, OpChoice};
pub use layer::LayerOp;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Gradients, PrimitiveOp, RunRng, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("edge '{edge}': unknown op kind '{kind}' (expected one of {})", OP_KINDS.join(", "))]
    UnknownOpKind { edge: String, kind: String },
    #[error("edge '{edge}': missing field '{field}'")]
    MissingField { edge: String, field: String },
    #[error("edge '{edge}' references unknown node '{node}'")]
    UnknownNode { edge: String, node: String },
    #[error("graph has a cycle closed by edge '{edge}'")]
    CyclicGraph { edge: String },
    #[error("shape inference failed at edge '{edge}': {detail}")]
    ShapeInference { edge: String, detail: String },
    #[error("cell template mismatch: {0}")]
    TemplateMismatch(String),
    #[error("non-finite architecture parameters {0}")]
    NonFiniteTheta(String),
    #[error("edge '{edge}': {op} produced a non-finite value")]
    NonFiniteEdge { edge: String, op: String },
    #[error("invalid graph: {0}")]
    Invalid(String),
}

/// A node with its per-sample shape (batch dimension excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub shape: Vec<usize>,
}

/// How an edge participates in evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeRole {
    /// Always evaluates its original op.
    Fixed,
    /// Mixed edge bound to `theta[params]`.
    Free { params: usize, candidates: CandidateSet },
    /// Former free edge after discretization.
    Decided(OpChoice),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedEdge {
    pub id: String,
    pub source: usize,
    pub target: usize,
    pub op: LayerOp,
    /// Indices into [`ArchGraph::weights`], in primitive input order.
    pub weights: Vec<usize>,
    pub role: EdgeRole,
}

impl MixedEdge {
    pub fn is_active(&self) -> bool {
        !matches!(self.role, EdgeRole::Decided(OpChoice::None))
    }

    pub fn candidates(&self) -> Option<CandidateSet> {
        match self.role {
            EdgeRole::Free { candidates, .. } => Some(candidates),
            _ => None,
        }
    }
}

/// Non-fatal conditions found while building or transforming a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphWarning {
    /// Every input of the node was discretized to none; it emits zeros.
    DegenerateNode { node: String },
    /// A free edge changes shape, so identity is not a candidate.
    IdentityInfeasible { edge: String },
}

impl fmt::Display for GraphWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphWarning::DegenerateNode { node } => {
                write!(f, "DegenerateNode: every input of node '{node}' is none; it emits zeros")
            }
            GraphWarning::IdentityInfeasible { edge } => {
                write!(f, "edge '{edge}' changes shape; candidates are {{none, same}}")
            }
        }
    }
}

/// Whether free edges mix (`Mixed`) or act as their original op (`Original`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Mixed,
    Original,
}

/// Tape handles for the weights and architecture parameters of one graph.
#[derive(Debug, Clone)]
pub struct Bindings {
    pub weights: Vec<Var>,
    pub theta: Vec<Var>,
}

/// One discretized edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDecision {
    pub edge: String,
    /// `[none, identity, same]` at discretization time.
    pub theta: [f64; 3],
    pub identity_feasible: bool,
    pub choice: OpChoice,
}

/// Result of [`ArchGraph::transform`].
#[derive(Debug, Clone)]
pub struct Transformed {
    pub graph: ArchGraph,
    pub decisions: Vec<EdgeDecision>,
    pub warnings: Vec<GraphWarning>,
    /// Old weight indices that survived, in their new order.
    pub kept_weights: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchGraph {
    pub name: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<MixedEdge>,
    pub input: usize,
    pub output: usize,
    /// Topological order of node indices.
    order: Vec<usize>,
    /// Incoming edge indices per node, in declaration order.
    incoming: Vec<Vec<usize>>,
    pub weights: Vec<Tensor>,
    pub theta: Vec<ArchParams>,
    /// Free edge indices sharing one `theta` entry, one list per group.
    pub cell_groups: Vec<Vec<usize>>,
    pub cell_template: Option<CellTemplate>,
}

impl ArchGraph {
    /// Builds a graph, resolving shapes and candidate sets and drawing
    /// initial weights from `rng` in edge order. Every free edge gets its
    /// own `(0, 0, 1)` triple.
    pub fn build(desc: &GraphDesc, rng: &mut RunRng) -> Result<(ArchGraph, Vec<GraphWarning>), GraphError> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, name) in desc.nodes.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(GraphError::Invalid(format!("duplicate node '{name}'")));
            }
        }
        let lookup = |edge: &str, node: &str| {
            index.get(node).copied().ok_or_else(|| GraphError::UnknownNode { edge: edge.into(), node: node.into() })
        };
        let input = lookup("<input>", &desc.input)?;
        let output = lookup("<output>", &desc.output)?;

        let mut ids = HashSet::new();
        let mut ends = Vec::with_capacity(desc.edges.len());
        for (i, e) in desc.edges.iter().enumerate() {
            let id = edge_id(e, i);
            if !ids.insert(id.clone()) {
                return Err(GraphError::Invalid(format!("duplicate edge id '{id}'")));
            }
            let s = lookup(&id, &e.from)?;
            let t = lookup(&id, &e.to)?;
            ends.push((id, s, t));
        }

        let n = desc.nodes.len();
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for (i, (_, s, t)) in ends.iter().enumerate() {
            incoming[*t].push(i);
            outgoing[*s].push(i);
        }
        let order = topo_order(n, &ends, &outgoing)?;

        if !incoming[input].is_empty() {
            return Err(GraphError::Invalid(format!("input node '{}' has incoming edges", desc.input)));
        }
        if !outgoing[output].is_empty() {
            return Err(GraphError::Invalid(format!("output node '{}' has outgoing edges", desc.output)));
        }
        for (i, name) in desc.nodes.iter().enumerate() {
            if i != input && incoming[i].is_empty() {
                return Err(GraphError::Invalid(format!("node '{name}' has no inputs; only '{}' may", desc.input)));
            }
            if i != output && outgoing[i].is_empty() {
                return Err(GraphError::Invalid(format!("node '{name}' has no outputs; only '{}' may", desc.output)));
            }
        }

        let mut shapes: Vec<Option<Vec<usize>>> = vec![None; n];
        shapes[input] = Some(desc.input_shape.clone());
        let mut ops: Vec<Option<LayerOp>> = vec![None; desc.edges.len()];
        for &v in &order {
            if v == input {
                continue;
            }
            for &ei in &incoming[v] {
                let (id, s, _) = &ends[ei];
                let in_shape = shapes[*s].clone().expect("sources precede targets in topological order");
                let op = desc.edges[ei].resolve(id, &in_shape)?;
                let out = op
                    .output_shape(&in_shape)
                    .map_err(|detail| GraphError::ShapeInference { edge: id.clone(), detail })?;
                match &shapes[v] {
                    Some(existing) if *existing != out => {
                        return Err(GraphError::ShapeInference {
                            edge: id.clone(),
                            detail: format!(
                                "node '{}' receives {out:?} here but {existing:?} from another edge",
                                desc.nodes[v]
                            ),
                        })
                    }
                    _ => shapes[v] = Some(out),
                }
                ops[ei] = Some(op);
            }
        }

        let mut graph = ArchGraph {
            name: desc.name.clone(),
            nodes: desc
                .nodes
                .iter()
                .zip(shapes)
                .map(|(name, shape)| Node { name: name.clone(), shape: shape.expect("every node reached") })
                .collect(),
            edges: Vec::with_capacity(desc.edges.len()),
            input,
            output,
            order,
            incoming,
            weights: Vec::new(),
            theta: Vec::new(),
            cell_groups: Vec::new(),
            cell_template: desc.cells.clone(),
        };
        let mut warnings = Vec::new();
        for (ei, ((id, s, t), op)) in ends.into_iter().zip(ops).enumerate() {
            let op = op.expect("every edge resolved");
            let ed = &desc.edges[ei];
            let identity = graph.nodes[s].shape == graph.nodes[t].shape;
            let role = match (ed.choice, ed.free) {
                (Some(choice), _) => EdgeRole::Decided(choice),
                (None, true) => {
                    if !identity {
                        warnings.push(GraphWarning::IdentityInfeasible { edge: id.clone() });
                    }
                    graph.theta.push(ArchParams::INIT);
                    EdgeRole::Free { params: graph.theta.len() - 1, candidates: CandidateSet { identity } }
                }
                (None, false) => EdgeRole::Fixed,
            };
            if let EdgeRole::Decided(OpChoice::Identity) = role {
                if !identity {
                    return Err(GraphError::ShapeInference {
                        edge: id,
                        detail: "identity decision on a shape-changing edge".into(),
                    });
                }
            }
            let weights = if matches!(role, EdgeRole::Decided(c) if c != OpChoice::Same) {
                Vec::new()
            } else {
                let ws = op.init_weights(rng);
                let first = graph.weights.len();
                graph.weights.extend(ws);
                (first..graph.weights.len()).collect()
            };
            graph.edges.push(MixedEdge { id, source: s, target: t, op, weights, role });
        }
        Ok((graph, warnings))
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.nodes[self.input].shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.nodes[self.output].shape
    }

    pub fn free_edges(&self) -> impl Iterator<Item = (usize, &MixedEdge)> {
        self.edges.iter().enumerate().filter(|(_, e)| matches!(e.role, EdgeRole::Free { .. }))
    }

    /// True when no edge is free: the graph carries no architecture parameters.
    pub fn is_fixed(&self) -> bool {
        self.theta.is_empty() && self.free_edges().next().is_none()
    }

    /// Architecture parameters of edge `edge`, if it is free.
    pub fn edge_params(&self, edge: usize) -> Option<ArchParams> {
        match self.edges[edge].role {
            EdgeRole::Free { params, .. } => Some(self.theta[params]),
            _ => None,
        }
    }

    /// Resets every triple to `(0, 0, 1)`. Edges without an identity
    /// candidate keep `theta_id` at exactly zero from here on.
    pub fn init_arch_params(&mut self) {
        self.theta.iter_mut().for_each(|p| *p = ArchParams::INIT);
    }

    /// Sets the triple of every free edge to the one-hot vector of `choice(edge)`.
    pub fn set_one_hot(&mut self, choice: impl Fn(usize) -> OpChoice) {
        for i in 0..self.edges.len() {
            if let EdgeRole::Free { params, .. } = self.edges[i].role {
                self.theta[params] = ArchParams::one_hot(choice(i));
            }
        }
    }

    /// Ties positionally matching free edges across repeated cells to one
    /// shared triple. Existing triples are replaced by `(0, 0, 1)`.
    pub fn cell_group_edges(&mut self, template: &CellTemplate) -> Result<Vec<Vec<usize>>, GraphError> {
        let Some(first) = template.instances.first() else {
            return Err(GraphError::TemplateMismatch("template has no cell instances".into()));
        };
        let width = first.len();
        let mut positions: Vec<Vec<usize>> = vec![Vec::new(); width];
        for (ci, cell) in template.instances.iter().enumerate() {
            if cell.len() != width {
                return Err(GraphError::TemplateMismatch(format!(
                    "cell {ci} lists {} edges, cell 0 lists {width}",
                    cell.len()
                )));
            }
            for (p, id) in cell.iter().enumerate() {
                let ei = self
                    .edge_index(id)
                    .ok_or_else(|| GraphError::TemplateMismatch(format!("cell {ci} names unknown edge '{id}'")))?;
                positions[p].push(ei);
            }
        }
        let mut seen = HashSet::new();
        for group in &positions {
            let lead = &self.edges[group[0]];
            for &ei in group {
                let e = &self.edges[ei];
                if !seen.insert(ei) {
                    return Err(GraphError::TemplateMismatch(format!("edge '{}' appears twice", e.id)));
                }
                if e.candidates().is_none() {
                    return Err(GraphError::TemplateMismatch(format!("edge '{}' is not free", e.id)));
                }
                if e.op != lead.op || e.candidates() != lead.candidates() {
                    return Err(GraphError::TemplateMismatch(format!(
                        "edge '{}' ({}, {}) does not match '{}' ({}, {})",
                        e.id,
                        e.op.label(),
                        e.candidates().unwrap(),
                        lead.id,
                        lead.op.label(),
                        lead.candidates().unwrap()
                    )));
                }
            }
        }
        let mut param_of_group = HashMap::new();
        for (gi, group) in positions.iter().enumerate() {
            for &ei in group {
                param_of_group.insert(ei, gi);
            }
        }
        // Renumber: groups first, then remaining free edges in edge order.
        let mut theta = vec![ArchParams::INIT; positions.len()];
        let edge_count = self.edges.len();
        for ei in 0..edge_count {
            if let EdgeRole::Free { candidates, .. } = self.edges[ei].role {
                let params = match param_of_group.get(&ei) {
                    Some(&g) => g,
                    None => {
                        theta.push(ArchParams::INIT);
                        theta.len() - 1
                    }
                };
                self.edges[ei].role = EdgeRole::Free { params, candidates };
            }
        }
        self.theta = theta;
        self.cell_groups = positions.clone();
        Ok(positions)
    }

    /// Records weights and architecture parameters on `tape`.
    pub fn bind(&self, tape: &mut Tape, weights_grad: bool, theta_grad: bool) -> Bindings {
        let weights = self
            .weights
            .iter()
            .map(|w| {
                let mut t = w.detached();
                t.set_requires_grad(weights_grad);
                tape.leaf(t)
            })
            .collect();
        let theta = self
            .theta
            .iter()
            .map(|p| {
                let mut t = Tensor::from_vec(p.to_array().to_vec());
                t.set_requires_grad(theta_grad);
                tape.leaf(t)
            })
            .collect();
        Bindings { weights, theta }
    }

    /// Forward pass over a batch `input` of shape `[N, ..input_shape]`.
    /// `step` selects the noise substream for noise ops.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bindings: &Bindings,
        input: Var,
        mode: ForwardMode,
        step: u64,
    ) -> Result<Var, GraphError> {
        let batch = tape.value(input).shape()[0];
        let expected: Vec<usize> = std::iter::once(batch).chain(self.input_shape().iter().copied()).collect();
        if tape.value(input).shape() != expected.as_slice() {
            return Err(TensorError::ShapeMismatch {
                op: "graph_input",
                detail: format!("got {:?}, expected {:?}", tape.value(input).shape(), expected),
            }
            .into());
        }
        let mut values: Vec<Option<Var>> = vec![None; self.nodes.len()];
        values[self.input] = Some(input);
        for &v in &self.order {
            if v == self.input {
                continue;
            }
            let mut acc: Option<Var> = None;
            for &ei in &self.incoming[v] {
                let e = &self.edges[ei];
                let x = values[e.source].expect("sources precede targets");
                let Some(out) = self.edge_output(tape, bindings, e, x, mode, step).map_err(|err| match err {
                    TensorError::NonFinite { op } => GraphError::NonFiniteEdge { edge: e.id.clone(), op },
                    other => other.into(),
                })?
                else {
                    continue;
                };
                acc = Some(match acc {
                    None => out,
                    Some(a) => tape.apply(PrimitiveOp::Add, &[a, out])?,
                });
            }
            values[v] = Some(match acc {
                Some(a) => a,
                None => {
                    let shape: Vec<usize> = std::iter::once(batch).chain(self.nodes[v].shape.iter().copied()).collect();
                    tape.constant(Tensor::zeros(&shape))
                }
            });
        }
        Ok(values[self.output].expect("output reached"))
    }

    fn edge_output(
        &self,
        tape: &mut Tape,
        bindings: &Bindings,
        e: &MixedEdge,
        x: Var,
        mode: ForwardMode,
        step: u64,
    ) -> Result<Option<Var>, TensorError> {
        Ok(Some(match e.role {
            EdgeRole::Decided(OpChoice::None) => return Ok(None),
            EdgeRole::Decided(OpChoice::Identity) => x,
            EdgeRole::Fixed | EdgeRole::Decided(OpChoice::Same) => self.apply_op(tape, bindings, e, x, step)?,
            EdgeRole::Free { params, candidates } => {
                let y = self.apply_op(tape, bindings, e, x, step)?;
                match mode {
                    ForwardMode::Original => y,
                    ForwardMode::Mixed => {
                        let z = tape.constant(Tensor::zeros(tape.value(y).shape()));
                        let xi = if candidates.identity { x } else { z };
                        tape.apply(PrimitiveOp::ScaleAdd, &[bindings.theta[params], z, xi, y])?
                    }
                }
            }
        }))
    }

    fn apply_op(&self, tape: &mut Tape, b: &Bindings, e: &MixedEdge, x: Var, step: u64) -> Result<Var, TensorError> {
        let mut inputs = vec![x];
        inputs.extend(e.weights.iter().map(|&w| b.weights[w]));
        tape.apply(e.op.primitive(step), &inputs)
    }

    /// Untracked forward on a plain batch.
    pub fn evaluate(&self, input: &Tensor, mode: ForwardMode, step: u64) -> Result<Tensor, GraphError> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false, false);
        let x = tape.constant(input.detached());
        let out = self.forward(&mut tape, &b, x, mode, step)?;
        Ok(tape.value(out).clone())
    }

    /// Weight gradients in [`ArchGraph::weights`] order.
    pub fn weight_grads(&self, bindings: &Bindings, grads: &Gradients) -> Vec<Vec<f64>> {
        bindings.weights.iter().zip(&self.weights).map(|(v, w)| grads.wrt_or_zeros(*v, w.numel())).collect()
    }

    /// Architecture gradients in [`ArchGraph::theta`] order, with the
    /// identity entry zeroed wherever identity is not a candidate.
    pub fn theta_grads(&self, bindings: &Bindings, grads: &Gradients) -> Vec<[f64; 3]> {
        let mut out: Vec<[f64; 3]> = bindings
            .theta
            .iter()
            .map(|v| {
                let g = grads.wrt_or_zeros(*v, 3);
                [g[0], g[1], g[2]]
            })
            .collect();
        for e in &self.edges {
            if let EdgeRole::Free { params, candidates } = e.role {
                if !candidates.identity {
                    out[params][1] = 0.0;
                }
            }
        }
        out
    }

    /// Discretizes every free edge and rebuilds the graph without
    /// architecture parameters. Same edges keep their weights unchanged;
    /// identity edges pass their input through; none edges are dropped from
    /// their target's sum.
    pub fn transform(&self) -> Result<Transformed, GraphError> {
        let mut decisions = Vec::new();
        let mut graph = self.clone();
        for e in graph.edges.iter_mut() {
            if let EdgeRole::Free { params, candidates } = e.role {
                let p = self.theta[params];
                let choice = discretize(&p, candidates).map_err(|_| {
                    GraphError::NonFiniteTheta(format!("edge '{}': {:?}", e.id, p.to_array()))
                })?;
                decisions.push(EdgeDecision {
                    edge: e.id.clone(),
                    theta: p.to_array(),
                    identity_feasible: candidates.identity,
                    choice,
                });
                e.role = EdgeRole::Decided(choice);
                if choice != OpChoice::Same {
                    e.weights.clear();
                }
            }
        }
        let kept_weights = graph.compact_weights();
        graph.theta.clear();
        graph.cell_groups.clear();
        let mut warnings = Vec::new();
        for (v, node) in graph.nodes.iter().enumerate() {
            if v != graph.input && graph.incoming[v].iter().all(|&ei| !graph.edges[ei].is_active()) {
                warnings.push(GraphWarning::DegenerateNode { node: node.name.clone() });
            }
        }
        Ok(Transformed { graph, decisions, warnings, kept_weights })
    }

    /// Drops weights no edge references; returns surviving old indices.
    fn compact_weights(&mut self) -> Vec<usize> {
        let mut kept = Vec::new();
        let mut remap = HashMap::new();
        for e in self.edges.iter_mut() {
            for w in e.weights.iter_mut() {
                let new = *remap.entry(*w).or_insert_with(|| {
                    kept.push(*w);
                    kept.len() - 1
                });
                *w = new;
            }
        }
        self.weights = kept.iter().map(|&i| self.weights[i].clone()).collect();
        kept
    }

    /// The graph with every free edge turned into a fixed original op.
    pub fn into_original(mut self) -> ArchGraph {
        for e in self.edges.iter_mut() {
            if let EdgeRole::Free { .. } = e.role {
                e.role = EdgeRole::Fixed;
            }
        }
        self.theta.clear();
        self.cell_groups.clear();
        self
    }

    pub fn count_costs(&self) -> Costs {
        cost::count(self)
    }

    /// Description that rebuilds this graph's structure. Free flags and
    /// decisions are preserved.
    pub fn to_desc(&self) -> GraphDesc {
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let mut d =
                    EdgeDesc::from_layer(&e.id, &self.nodes[e.source].name, &self.nodes[e.target].name, &e.op);
                match e.role {
                    EdgeRole::Fixed => {}
                    EdgeRole::Free { .. } => d.free = true,
                    EdgeRole::Decided(c) => {
                        d.free = true;
                        d.choice = Some(c);
                    }
                }
                d
            })
            .collect();
        GraphDesc {
            name: self.name.clone(),
            input: self.nodes[self.input].name.clone(),
            output: self.nodes[self.output].name.clone(),
            input_shape: self.input_shape().to_vec(),
            nodes: self.nodes.iter().map(|n| n.name.clone()).collect(),
            edges,
            cells: self.cell_template.clone(),
        }
    }

    /// Incoming edge indices of node `v`.
    pub fn incoming(&self, v: usize) -> &[usize] {
        &self.incoming[v]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }
}

/// Kahn's algorithm; on failure names an edge that closes a cycle.
fn topo_order(n: usize, ends: &[(String, usize, usize)], outgoing: &[Vec<usize>]) -> Result<Vec<usize>, GraphError> {
    let mut indeg = vec![0usize; n];
    for (_, _, t) in ends {
        indeg[*t] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).rev().collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop() {
        order.push(v);
        for &ei in outgoing[v].iter().rev() {
            let t = ends[ei].2;
            indeg[t] -= 1;
            if indeg[t] == 0 {
                ready.push(t);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Depth-first search for a back edge among the unresolved nodes.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; n];
    fn dfs(v: usize, ends: &[(String, usize, usize)], outgoing: &[Vec<usize>], mark: &mut [Mark]) -> Option<usize> {
        mark[v] = Mark::Active;
        for &ei in &outgoing[v] {
            let t = ends[ei].2;
            match mark[t] {
                Mark::Active => return Some(ei),
                Mark::New => {
                    if let Some(found) = dfs(t, ends, outgoing, mark) {
                        return Some(found);
                    }
                }
                Mark::Done => {}
            }
        }
        mark[v] = Mark::Done;
        None
    }
    for v in 0..n {
        if mark[v] == Mark::New {
            if let Some(ei) = dfs(v, ends, outgoing, &mut mark) {
                return Err(GraphError::CyclicGraph { edge: ends[ei].0.clone() });
            }
        }
    }
    unreachable!("a cycle exists when Kahn's algorithm stalls")
}
