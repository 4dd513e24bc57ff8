#![allow(dead_code)]

use proxyless::graph::{ArchGraph, ArchParams, CellTemplate, EdgeRole, EdgeDesc, ForwardMode, GraphDesc, OpChoice};
use proxyless::objectives::{cross_entropy, cross_entropy_value};
use proxyless::tensor::{seeded_rng, RunRng, Tape, Tensor};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn random_tensor(shape: &[usize], rng: &mut RunRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Per-sample input shape of a generated graph.
#[derive(Debug, Clone, Copy)]
enum Kind {
    Vector(usize),
    Image(usize, usize),
}

/// A random DAG of 2..=5 hidden nodes with shape-preserving ops, each hidden
/// node summing one or two earlier nodes, followed by a classifier head.
/// Between 1 and `max_free` edges are free; the head may be free too, which
/// exercises the identity-infeasible path.
pub fn random_desc(rng: &mut RunRng, max_free: usize) -> GraphDesc {
    let kind = if rng.random_bool(0.5) {
        Kind::Vector(rng.random_range(2..=4))
    } else {
        Kind::Image(rng.random_range(1..=2), rng.random_range(3..=4))
    };
    let hidden = rng.random_range(2..=5);
    let mut nodes = vec!["n0".to_string()];
    let mut edges = Vec::new();
    for j in 1..=hidden {
        let name = format!("n{j}");
        nodes.push(name.clone());
        let mut sources = vec![j - 1];
        if j >= 2 && rng.random_bool(0.5) {
            sources.push(rng.random_range(0..j - 1));
        }
        for s in sources {
            edges.push(random_op(&format!("n{s}"), &name, kind, rng));
        }
    }
    let classes = rng.random_range(2..=4);
    let last = format!("n{hidden}");
    match kind {
        Kind::Vector(_) => edges.push(EdgeDesc::linear(&last, "out", classes)),
        Kind::Image(..) => {
            nodes.push("pool".into());
            edges.push(EdgeDesc::new(&last, "pool", "global_avg_pool"));
            edges.push(EdgeDesc::linear("pool", "out", classes));
        }
    }
    nodes.push("out".into());
    let budget = rng.random_range(1..=max_free.min(edges.len()));
    let mut idx: Vec<usize> = (0..edges.len()).collect();
    for k in 0..budget {
        let pick = rng.random_range(k..idx.len());
        idx.swap(k, pick);
        edges[idx[k]].free = true;
    }
    let input_shape = match kind {
        Kind::Vector(d) => vec![d],
        Kind::Image(c, s) => vec![c, s, s],
    };
    GraphDesc {
        name: "random".into(),
        input: "n0".into(),
        output: "out".into(),
        input_shape,
        nodes,
        edges,
        cells: None,
    }
}

fn random_op(from: &str, to: &str, kind: Kind, rng: &mut RunRng) -> EdgeDesc {
    let roll = rng.random_range(0..10);
    match (kind, roll) {
        (_, 0..=1) => EdgeDesc::new(from, to, "relu"),
        (_, 2) => EdgeDesc::new(from, to, "identity"),
        (_, 3) => EdgeDesc::noise(from, to, rng.random_range(0.1..0.5), rng.random()),
        (Kind::Vector(d), _) => EdgeDesc::linear(from, to, d),
        (Kind::Image(c, _), 4..=6) => EdgeDesc::conv(from, to, 3, 1, 1, c),
        (Kind::Image(c, _), _) => EdgeDesc::conv(from, to, 1, 1, 0, c),
    }
}

/// Perturbs theta away from `(0, 0, 1)` so all three entries matter.
pub fn randomize_theta(graph: &mut ArchGraph, rng: &mut RunRng) {
    for i in 0..graph.edges.len() {
        if let Some(c) = graph.edges[i].candidates() {
            let draw = |rng: &mut RunRng| rng.random_range(-1.0..1.5);
            let id = if c.identity { draw(rng) } else { 0.0 };
            let p = ArchParams::new(draw(rng), id, draw(rng));
            if let EdgeRole::Free { params, .. } = graph.edges[i].role {
                graph.theta[params] = p;
            }
        }
    }
}

/// A random candidate for every free edge.
pub fn random_choices(graph: &ArchGraph, rng: &mut RunRng) -> Vec<Option<OpChoice>> {
    graph.edges.iter().map(|e| e.candidates().map(|c| *c.choices().choose(rng).unwrap())).collect()
}

pub fn mean_ce(graph: &ArchGraph, x: &Tensor, labels: &[usize]) -> f64 {
    let logits = graph.evaluate(x, ForwardMode::Mixed, 3).unwrap();
    cross_entropy_value(&logits, labels).unwrap()
}

/// Analytic gradients of the mixed-mode cross-entropy.
pub struct Analytic {
    pub loss: f64,
    pub weights: Vec<Vec<f64>>,
    pub theta: Vec<[f64; 3]>,
}

pub fn analytic(graph: &ArchGraph, x: &Tensor, labels: &[usize]) -> Analytic {
    let mut tape = Tape::new();
    let b = graph.bind(&mut tape, true, true);
    let xv = tape.constant(x.clone());
    let y = graph.forward(&mut tape, &b, xv, ForwardMode::Mixed, 3).unwrap();
    let loss = cross_entropy(&mut tape, y, labels).unwrap();
    let grads = tape.backward(loss).unwrap();
    Analytic {
        loss: tape.value(loss).data()[0],
        weights: graph.weight_grads(&b, &grads),
        theta: graph.theta_grads(&b, &grads),
    }
}

/// Largest relative error between analytic and central-difference
/// gradients, over every theta entry that is a live candidate and up to
/// `weight_samples` weight entries.
pub fn gradcheck(graph: &ArchGraph, x: &Tensor, labels: &[usize], weight_samples: usize, rng: &mut RunRng) -> f64 {
    let a = analytic(graph, x, labels);
    let mut worst: f64 = 0.0;
    let identity_live: Vec<bool> = (0..graph.theta.len())
        .map(|p| {
            graph.edges.iter().any(|e| {
                matches!(e.role, EdgeRole::Free { params, candidates } if params == p && candidates.identity)
            })
        })
        .collect();
    for p in 0..graph.theta.len() {
        for k in 0..3 {
            if k == 1 && !identity_live[p] {
                assert_eq!(a.theta[p][1], 0.0, "masked theta_id must have zero gradient");
                continue;
            }
            let at = |delta: f64| {
                let mut g = graph.clone();
                let mut v = g.theta[p].to_array();
                v[k] += delta;
                g.theta[p] = ArchParams::from_array(v);
                mean_ce(&g, x, labels)
            };
            let numeric = (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(a.theta[p][k], numeric));
        }
    }
    for _ in 0..weight_samples {
        if graph.weights.is_empty() {
            break;
        }
        let w = rng.random_range(0..graph.weights.len());
        let j = rng.random_range(0..graph.weights[w].numel());
        let at = |delta: f64| {
            let mut g = graph.clone();
            g.weights[w].data_mut()[j] += delta;
            mean_ce(&g, x, labels)
        };
        let numeric = (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(a.weights[w][j], numeric));
    }
    worst
}

pub fn random_labels(n: usize, classes: usize, rng: &mut RunRng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// Builds a random graph with a random batch and labels for it.
pub fn random_case(seed: u64, max_free: usize) -> (ArchGraph, Tensor, Vec<usize>, RunRng) {
    let mut rng = seeded_rng(seed);
    let desc = random_desc(&mut rng, max_free);
    let (mut graph, _) = ArchGraph::build(&desc, &mut rng).unwrap();
    // Zero biases put ReLU inputs exactly on the kink whenever a receptive
    // field is all zeros, where central differences see half the slope.
    for w in &mut graph.weights {
        if w.data().iter().all(|&v| v == 0.0) {
            *w = random_tensor(w.shape(), &mut rng);
        }
    }
    let batch = rng.random_range(2..=4);
    let shape: Vec<usize> = std::iter::once(batch).chain(graph.input_shape().iter().copied()).collect();
    let x = random_tensor(&shape, &mut rng);
    let classes = graph.output_shape()[0];
    let labels = random_labels(batch, classes, &mut rng);
    (graph, x, labels, rng)
}

/// Three repeated cells over a `[c, 4, 4]` input. Each cell has a free
/// 3x3 conv, a fixed identity skip and a free ReLU, tied by position.
pub fn three_cell_desc(c: usize) -> GraphDesc {
    let mut nodes = vec!["a0".to_string()];
    let mut edges = Vec::new();
    let mut instances = Vec::new();
    for k in 0..3 {
        let (a, s, n) = (format!("a{k}"), format!("s{k}"), format!("a{}", k + 1));
        nodes.extend([s.clone(), n.clone()]);
        let conv = format!("cell{k}_conv");
        let act = format!("cell{k}_act");
        edges.push(EdgeDesc::conv(&a, &s, 3, 1, 1, c).with_id(&conv).free());
        edges.push(EdgeDesc::new(&a, &s, "identity").with_id(&format!("cell{k}_skip")));
        edges.push(EdgeDesc::new(&s, &n, "relu").with_id(&act).free());
        instances.push(vec![conv, act]);
    }
    nodes.extend(["pool".to_string(), "out".to_string()]);
    edges.push(EdgeDesc::new("a3", "pool", "global_avg_pool"));
    edges.push(EdgeDesc::linear("pool", "out", 3));
    GraphDesc {
        name: "cells".into(),
        input: "a0".into(),
        output: "out".into(),
        input_shape: vec![c, 4, 4],
        nodes,
        edges,
        cells: Some(CellTemplate { instances }),
    }
}
