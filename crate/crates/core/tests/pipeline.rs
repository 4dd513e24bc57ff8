mod common;

use proxyless::data::{generate_synthetic, BatchStream, SyntheticSpec};
use proxyless::graph::{ArchGraph, ArchParams, EdgeDesc, ForwardMode, GraphDesc, OpChoice};
use proxyless::objectives::knn_evaluate;
use proxyless::tensor::{forward, OptimizerKind, PrimitiveOp, Tensor};
use proxyless::train::{
    arch_train_stage, evaluate, init_rng, network_train_stage, run_pipeline, Data, Mode, Objective, Session,
    TrainConfig, TrainError, ARCH_STAGE, NETWORK_STAGE,
};

fn tiny_data(classes: usize, per_class: usize) -> Data {
    let spec = SyntheticSpec {
        num_classes: classes,
        height: 8,
        width: 8,
        samples_per_class: per_class,
        test_samples_per_class: 5,
        ..Default::default()
    };
    let (train, test) = generate_synthetic(&spec).unwrap();
    Data { train, test }
}

/// Small CNN over `[3, 8, 8]` with a free conv beside a fixed skip and a
/// free noise edge after pooling.
fn toy_desc(classes: usize, noise: f64) -> GraphDesc {
    let nodes = ["in", "stem", "act", "block", "block_act", "pooled", "noisy", "logits"];
    GraphDesc {
        name: "toy".into(),
        input: "in".into(),
        output: "logits".into(),
        input_shape: vec![3, 8, 8],
        nodes: nodes.iter().map(|s| s.to_string()).collect(),
        edges: vec![
            EdgeDesc::conv("in", "stem", 3, 2, 1, 4).with_id("stem"),
            EdgeDesc::new("stem", "act", "relu"),
            EdgeDesc::conv("act", "block", 3, 1, 1, 4).with_id("conv").free(),
            EdgeDesc::new("act", "block", "identity").with_id("skip"),
            EdgeDesc::new("block", "block_act", "relu"),
            EdgeDesc::new("block_act", "pooled", "global_avg_pool"),
            EdgeDesc::noise("pooled", "noisy", noise, 3).with_id("noise").free(),
            EdgeDesc::linear("noisy", "logits", classes).with_id("head"),
        ],
        cells: None,
    }
}

fn build(desc: &GraphDesc, seed: u64) -> ArchGraph {
    ArchGraph::build(desc, &mut init_rng(seed)).unwrap().0
}

fn config(total: usize, arch: usize) -> TrainConfig {
    TrainConfig {
        total_epochs: total,
        arch_epochs: Some(arch),
        batch_size: 8,
        w_optimizer: OptimizerKind::sgd(0.05, 0.9),
        theta_optimizer: OptimizerKind::adam(0.01),
        ..Default::default()
    }
}

#[test]
fn arch_stage_alternates_once_per_batch() {
    let data = tiny_data(4, 10);
    let mut graph = build(&toy_desc(4, 0.2), 0);
    let rec = arch_train_stage(&mut graph, &data, &config(1, 1)).unwrap();
    let m = BatchStream::count(data.train.len(), 8) as u64;
    assert_eq!(m, 5);
    assert_eq!((rec.w_updates, rec.theta_updates), (m, m));
    assert_eq!(rec.epoch_loss.len(), 1);
    assert_eq!(rec.epoch_metric.len(), 1);
    assert!(rec.wall_seconds > 0.0);
    assert_eq!(rec.theta_start.len(), 2);
    assert!(rec.theta_start.iter().all(|s| s.theta == [0.0, 0.0, 1.0]));

    let mut graph = build(&toy_desc(4, 0.2), 0);
    let rec = arch_train_stage(&mut graph, &data, &config(3, 3)).unwrap();
    assert_eq!((rec.w_updates, rec.theta_updates), (3 * m, 3 * m));
    assert_eq!(rec.epochs, 3);
}

#[test]
fn frozen_theta_equals_plain_training() {
    let data = tiny_data(4, 10);
    let mut cfg = config(3, 3);
    cfg.theta_optimizer = OptimizerKind::adam(0.0);
    let mut mixed = build(&toy_desc(4, 0.2), 1);
    let arch = arch_train_stage(&mut mixed, &data, &cfg).unwrap();
    assert!(mixed.theta.iter().all(|p| *p == ArchParams::INIT));

    let mut plain = build(&toy_desc(4, 0.2), 1).into_original();
    let net = network_train_stage(&mut plain, &data, &cfg, 3).unwrap();
    assert_eq!(arch.epoch_loss, net.epoch_loss);
    assert_eq!(arch.epoch_metric, net.epoch_metric);
    for (a, b) in mixed.weights.iter().zip(&plain.weights) {
        assert!(a.bitwise_eq(b));
    }
}

#[test]
fn baseline_has_one_stage_and_keeps_architecture() {
    let data = tiny_data(4, 10);
    let desc = toy_desc(4, 0.2);
    let mut cfg = config(2, 1);
    cfg.mode = Mode::Baseline;
    let (graph, report) = run_pipeline(build(&desc, 0), &data, &cfg).unwrap();
    assert_eq!(report.stages.len(), 1);
    assert_eq!(report.stages[0].name, NETWORK_STAGE);
    assert_eq!(report.stages[0].theta_updates, 0);
    assert!(report.discretization.is_empty());
    assert_eq!(report.cost_before, report.cost_after);
    assert!(graph.is_fixed());
    let fixed = &report.fixed_graph;
    assert_eq!(fixed.nodes, desc.nodes);
    for (a, b) in fixed.edges.iter().zip(&desc.edges) {
        assert_eq!((&a.from, &a.to, &a.op), (&b.from, &b.to, &b.op));
        assert_eq!(a.choice, None);
    }
    assert!((0.0..=1.0).contains(&report.final_metric));
}

#[test]
fn all_epochs_in_arch_stage_leaves_empty_network_stage() {
    let data = tiny_data(4, 10);
    let (graph, report) = run_pipeline(build(&toy_desc(4, 0.2), 2), &data, &config(2, 2)).unwrap();
    assert_eq!(report.stages.len(), 2);
    assert_eq!(report.stages[0].name, ARCH_STAGE);
    let net = &report.stages[1];
    assert_eq!((net.epochs, net.w_updates, net.theta_updates), (0, 0, 0));
    assert!(net.epoch_loss.is_empty());
    assert!(graph.is_fixed());
    let again = evaluate(&graph, &data, Objective::Supervised, 200).unwrap();
    assert_eq!(again, report.final_metric);
}

#[test]
fn network_stage_never_touches_structure() {
    let data = tiny_data(4, 10);
    let (graph, report) = run_pipeline(build(&toy_desc(4, 0.2), 3), &data, &config(3, 1)).unwrap();
    let net = &report.stages[1];
    assert_eq!(net.theta_updates, 0);
    assert_eq!(net.w_updates, 2 * 5);
    assert!(net.decisions.is_empty());
    assert_eq!(graph.to_desc(), report.fixed_graph);
    assert_eq!(report.stages[0].decisions, report.discretization);
}

#[test]
fn surviving_weights_carry_over() {
    let data = tiny_data(4, 10);
    let cfg = config(2, 1);
    let mut graph = build(&toy_desc(4, 0.2), 4);
    let mut session = Session::new(&graph, &data, &cfg).unwrap();
    session.arch_stage(&mut graph, 1).unwrap();
    let conv = graph.edge_index("conv").unwrap();
    graph.set_one_hot(|i| if i == conv { OpChoice::None } else { OpChoice::Same });
    let t = session.transform(&graph).unwrap();
    assert!(t.graph.edges[conv].weights.is_empty());
    for (new, &old) in t.kept_weights.iter().enumerate() {
        assert!(t.graph.weights[new].bitwise_eq(&graph.weights[old]));
    }
    let kept: Vec<usize> = session.weight_optimizer().first_moments().iter().map(Vec::len).collect();
    let expected: Vec<usize> = t.graph.weights.iter().map(Tensor::numel).collect();
    assert_eq!(kept, expected);
}

#[test]
fn zero_arch_epochs_matches_baseline_bitwise() {
    let data = tiny_data(4, 10);
    let desc = toy_desc(4, 0.2);
    let full = config(3, 0);
    let mut base = full.clone();
    base.mode = Mode::Baseline;
    let (ga, ra) = run_pipeline(build(&desc, 5), &data, &full).unwrap();
    let (gb, rb) = run_pipeline(build(&desc, 5), &data, &base).unwrap();
    for (a, b) in ga.weights.iter().zip(&gb.weights) {
        assert!(a.bitwise_eq(b));
    }
    let mut ra = ra.without_timing();
    let rb = rb.without_timing();
    assert_eq!(ra.final_metric.to_bits(), rb.final_metric.to_bits());
    ra.config.mode = Mode::Baseline;
    assert_eq!(ra, rb);
}

#[test]
fn contrastive_metric_is_knn_on_encoder_features() {
    let data = tiny_data(3, 10);
    let desc = GraphDesc {
        name: "encoder".into(),
        input: "in".into(),
        output: "features".into(),
        input_shape: vec![3, 8, 8],
        nodes: ["in", "c", "r", "features"].iter().map(|s| s.to_string()).collect(),
        edges: vec![
            EdgeDesc::conv("in", "c", 3, 1, 1, 4),
            EdgeDesc::new("c", "r", "relu"),
            EdgeDesc::new("r", "features", "global_avg_pool"),
        ],
        cells: None,
    };
    let graph = build(&desc, 8);
    let unit = |d: &proxyless::data::Dataset| {
        let all: Vec<usize> = (0..d.len()).collect();
        let out = graph.evaluate(&d.gather(&all).images, ForwardMode::Original, 0).unwrap();
        forward(&PrimitiveOp::L2Normalize, &[&out]).unwrap()
    };
    let expected =
        knn_evaluate(&unit(&data.train), data.train.labels(), &unit(&data.test), data.test.labels(), 7).unwrap();
    assert_eq!(evaluate(&graph, &data, Objective::Simclr, 7).unwrap(), expected);
    // k larger than the training set is clamped.
    let clamped =
        knn_evaluate(&unit(&data.train), data.train.labels(), &unit(&data.test), data.test.labels(), 30).unwrap();
    assert_eq!(evaluate(&graph, &data, Objective::Simclr, 200).unwrap(), clamped);
}

#[test]
fn constant_classifier_scores_one_in_k() {
    let data = tiny_data(10, 2);
    let desc = GraphDesc {
        name: "constant".into(),
        input: "in".into(),
        output: "logits".into(),
        input_shape: vec![3, 8, 8],
        nodes: ["in", "p", "logits"].iter().map(|s| s.to_string()).collect(),
        edges: vec![EdgeDesc::new("in", "p", "global_avg_pool"), EdgeDesc::linear("p", "logits", 10)],
        cells: None,
    };
    let mut graph = build(&desc, 0);
    graph.weights[0] = Tensor::zeros(graph.weights[0].shape());
    let mut bias = vec![0.0; 10];
    bias[0] = 1.0;
    graph.weights[1] = Tensor::from_vec(bias);
    assert!((evaluate(&graph, &data, Objective::Supervised, 1).unwrap() - 0.1).abs() < 1e-15);
}

#[test]
fn non_finite_forward_names_the_edge() {
    let data = tiny_data(4, 10);
    let mut graph = build(&toy_desc(4, 0.2), 6);
    let head = graph.edge_index("head").unwrap();
    let w = graph.edges[head].weights[0];
    graph.weights[w] = Tensor::full(graph.weights[w].shape(), f64::MAX);
    let err = arch_train_stage(&mut graph, &data, &config(1, 1)).unwrap_err();
    match err {
        TrainError::NonFinite { stage, location, .. } => {
            assert_eq!(stage, ARCH_STAGE);
            assert!(location.contains("'head'"), "{location}");
        }
        other => panic!("expected NonFinite, got {other:?}"),
    }

    let mut graph = build(&toy_desc(4, 0.2), 6);
    graph.theta[1] = ArchParams::new(0.0, f64::NAN, 1.0);
    let err = arch_train_stage(&mut graph, &data, &config(1, 1)).unwrap_err();
    match err {
        TrainError::NonFinite { location, .. } => assert!(location.contains("'noise'"), "{location}"),
        other => panic!("expected NonFinite, got {other:?}"),
    }
}

#[test]
fn contrastive_pipeline_runs_and_reports_knn() {
    let data = tiny_data(3, 8);
    let mut desc = toy_desc(3, 0.1);
    desc.edges.pop();
    desc.nodes.pop();
    desc.output = "noisy".into();
    let mut cfg = config(2, 1);
    cfg.objective = Objective::Simclr;
    cfg.knn_k = 5;
    let (_, report) = run_pipeline(build(&desc, 0), &data, &cfg).unwrap();
    assert_eq!(report.metric, "knn_accuracy");
    assert!((0.0..=1.0).contains(&report.final_metric));
    assert!(report.stages.iter().all(|s| s.epoch_loss.iter().all(|l| l.is_finite())));
}

#[test]
fn session_rejects_mismatched_shapes() {
    let data = tiny_data(4, 2);
    let mut desc = toy_desc(4, 0.2);
    desc.input_shape = vec![3, 16, 16];
    let graph = build(&desc, 0);
    assert!(matches!(Session::new(&graph, &data, &config(1, 1)), Err(TrainError::Config(_))));
    let graph = build(&toy_desc(3, 0.2), 0);
    assert!(matches!(Session::new(&graph, &data, &config(1, 1)), Err(TrainError::Config(_))));
}
