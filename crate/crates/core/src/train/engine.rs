use std::time::Instant;

use super::{
    augment_rng, batch_rng, head_rng, Data, Mode, Objective, ProjectionHead, Result, StageRecord, ThetaSnapshot,
    TrainConfig, TrainError, ARCH_STAGE, NETWORK_STAGE,
};
use crate::data::{batches, Dataset, Provenance};
use crate::graph::{ArchGraph, ArchParams, ForwardMode, GraphError, Transformed};
use crate::objectives::{augment_pair, cross_entropy, knn_evaluate, ntxent, ObjectiveError};
use crate::report::{RunReport, SCHEMA_VERSION};
use crate::tensor::{forward, Gradients, OptimizerState, PrimitiveOp, Tape, Tensor, TensorError, Var};

/// Noise substreams used by evaluation forwards start here, far above any
/// training step count.
const EVAL_STEP: u64 = 1 << 40;
const EVAL_TRAIN_FEATURES: u64 = EVAL_STEP + (1 << 20);
const EVAL_CHUNK: usize = 256;

/// Inputs of one training step: images (two stacked views for the
/// contrastive objective) and labels.
struct Prepared {
    images: Tensor,
    labels: Vec<usize>,
}

/// Mutable state of one run: optimizer buffers, the projection head, and
/// the global step and epoch counters that key every RNG substream.
pub struct Session<'a> {
    config: &'a TrainConfig,
    data: &'a Data,
    head: Option<ProjectionHead>,
    head_opt: Option<OptimizerState>,
    w_opt: OptimizerState,
    theta_opt: OptimizerState,
    step: u64,
    epoch: usize,
}

impl<'a> Session<'a> {
    pub fn new(graph: &ArchGraph, data: &'a Data, config: &'a TrainConfig) -> Result<Self> {
        config.validate()?;
        for d in [&data.train, &data.test] {
            if d.image_shape().as_slice() != graph.input_shape() {
                return Err(TrainError::Config(format!(
                    "dataset images are {:?}, graph expects {:?}",
                    d.image_shape(),
                    graph.input_shape()
                )));
            }
        }
        let out = graph.output_shape();
        let head = match config.objective {
            Objective::Supervised => {
                if out.len() != 1 || out[0] < data.train.num_classes {
                    return Err(TrainError::Config(format!(
                        "supervised graph must emit [{}] logits, got {out:?}",
                        data.train.num_classes
                    )));
                }
                None
            }
            Objective::Simclr => {
                if out.len() != 1 || out[0] < 2 {
                    return Err(TrainError::Config(format!("contrastive graph must emit [D >= 2] features, got {out:?}")));
                }
                Some(ProjectionHead::new(out[0], &mut head_rng(config.seed)))
            }
        };
        let head_opt = head.as_ref().map(|h| OptimizerState::for_params(config.w_optimizer, &h.params));
        Ok(Session {
            config,
            data,
            head_opt,
            head,
            w_opt: OptimizerState::for_params(config.w_optimizer, &graph.weights),
            theta_opt: OptimizerState::new(config.theta_optimizer, &vec![3; graph.theta.len()]),
            step: 0,
            epoch: 0,
        })
    }

    /// Training steps taken so far across all stages.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn weight_optimizer(&self) -> &OptimizerState {
        &self.w_opt
    }

    /// Alternating stage: per mini-batch a weight step with `theta` fixed,
    /// then a `theta` step on the same batch with the updated weights.
    pub fn arch_stage(&mut self, graph: &mut ArchGraph, epochs: usize) -> Result<StageRecord> {
        let start = Instant::now();
        let mut rec = empty_record(ARCH_STAGE, epochs);
        rec.theta_start = snapshot(graph);
        for _ in 0..epochs {
            self.run_epoch(graph, &mut rec, true)?;
        }
        rec.theta_end = snapshot(graph);
        rec.wall_seconds = elapsed(start);
        Ok(rec)
    }

    /// Discretizes `graph`, keeping the momentum of surviving weights.
    pub fn transform(&mut self, graph: &ArchGraph) -> Result<Transformed> {
        let t = graph.transform()?;
        self.w_opt.retain(&t.kept_weights);
        Ok(t)
    }

    /// Weight-only stage on a fixed graph.
    pub fn network_stage(&mut self, graph: &mut ArchGraph, epochs: usize) -> Result<StageRecord> {
        if !graph.is_fixed() {
            return Err(TrainError::Config("network stage needs a graph without free edges".into()));
        }
        let start = Instant::now();
        let mut rec = empty_record(NETWORK_STAGE, epochs);
        for _ in 0..epochs {
            self.run_epoch(graph, &mut rec, false)?;
        }
        rec.wall_seconds = elapsed(start);
        Ok(rec)
    }

    fn run_epoch(&mut self, graph: &mut ArchGraph, rec: &mut StageRecord, arch: bool) -> Result<()> {
        let data = self.data;
        let mode = if arch { ForwardMode::Mixed } else { ForwardMode::Original };
        let mut order_rng = batch_rng(self.config.seed, self.epoch);
        let mut aug_rng = augment_rng(self.config.seed, self.epoch);
        let (mut loss_sum, mut count) = (0.0, 0usize);
        let local_epoch = rec.epoch_loss.len();
        for (bi, batch) in batches(&data.train, self.config.batch_size, &mut order_rng).enumerate() {
            let inputs = match self.config.objective {
                Objective::Supervised => Prepared {
                    labels: batch.labels.clone().unwrap_or_default(),
                    images: batch.images,
                },
                Objective::Simclr => Prepared {
                    images: augment_pair(&batch, &self.config.augment, &mut aug_rng).stacked(),
                    labels: Vec::new(),
                },
            };
            let n = batch_len(&inputs, self.config);
            let loss = self
                .weight_step(graph, &inputs, mode)
                .map_err(|e| self.diagnose(graph, e, &rec.name, local_epoch, bi))?;
            rec.w_updates += 1;
            if arch {
                self.theta_step(graph, &inputs).map_err(|e| self.diagnose(graph, e, &rec.name, local_epoch, bi))?;
                rec.theta_updates += 1;
            }
            loss_sum += loss * n as f64;
            count += n;
            self.step += 1;
        }
        rec.epoch_loss.push(loss_sum / count.max(1) as f64);
        let metric = self.metric(graph, mode).map_err(|e| self.diagnose(graph, e, "evaluation", local_epoch, 0))?;
        rec.epoch_metric.push(metric);
        self.epoch += 1;
        Ok(())
    }

    fn weight_step(&mut self, graph: &mut ArchGraph, inputs: &Prepared, mode: ForwardMode) -> Result<f64> {
        let mut tape = Tape::new();
        let b = graph.bind(&mut tape, true, false);
        let hv = self.head.as_ref().map(|h| h.bind(&mut tape, true)).unwrap_or_default();
        let loss = batch_loss(graph, self.head.as_ref(), self.config, &mut tape, &b, &hv, inputs, mode, self.step)?;
        let value = tape.value(loss).data()[0];
        check_loss(value)?;
        let grads = backward(&tape, loss)?;
        let wg = match &grads {
            Some(g) => graph.weight_grads(&b, g),
            None => graph.weights.iter().map(|w| vec![0.0; w.numel()]).collect(),
        };
        self.w_opt.step(&mut graph.weights, &wg)?;
        if let (Some(head), Some(opt)) = (self.head.as_mut(), self.head_opt.as_mut()) {
            let hg: Vec<Vec<f64>> = hv
                .iter()
                .zip(&head.params)
                .map(|(v, p)| grads.as_ref().map_or(vec![0.0; p.numel()], |g| g.wrt_or_zeros(*v, p.numel())))
                .collect();
            opt.step(&mut head.params, &hg)?;
        }
        ensure_finite(graph, self.head.as_ref())?;
        Ok(value)
    }

    fn theta_step(&mut self, graph: &mut ArchGraph, inputs: &Prepared) -> Result<()> {
        if graph.theta.is_empty() {
            self.theta_opt.step(&mut [], &[])?;
            return Ok(());
        }
        let mut tape = Tape::new();
        let b = graph.bind(&mut tape, false, true);
        let hv = self.head.as_ref().map(|h| h.bind(&mut tape, false)).unwrap_or_default();
        let loss =
            batch_loss(graph, self.head.as_ref(), self.config, &mut tape, &b, &hv, inputs, ForwardMode::Mixed, self.step)?;
        check_loss(tape.value(loss).data()[0])?;
        let grads = tape.backward(loss)?;
        let tg: Vec<Vec<f64>> = graph.theta_grads(&b, &grads).iter().map(|g| g.to_vec()).collect();
        let mut params: Vec<Tensor> = graph.theta.iter().map(|p| Tensor::from_vec(p.to_array().to_vec())).collect();
        self.theta_opt.step(&mut params, &tg)?;
        for (p, t) in graph.theta.iter_mut().zip(&params) {
            let d = t.data();
            *p = ArchParams::from_array([d[0], d[1], d[2]]);
        }
        ensure_finite(graph, self.head.as_ref())
    }

    /// Held-out metric: top-1 accuracy, or KNN accuracy of unit-norm
    /// encoder features against the training set.
    pub fn metric(&self, graph: &ArchGraph, mode: ForwardMode) -> Result<f64> {
        metric(graph, self.data, self.config.objective, self.config.knn_k, mode)
    }

    fn diagnose(&self, graph: &ArchGraph, err: TrainError, stage: &str, epoch: usize, batch: usize) -> TrainError {
        let non_finite = |location: String| TrainError::NonFinite { stage: stage.to_string(), epoch, batch, location };
        let param = locate_non_finite(graph, self.head.as_ref());
        match err {
            TrainError::Graph(GraphError::NonFiniteEdge { edge, op }) => {
                non_finite(param.unwrap_or_else(|| format!("output of edge '{edge}' ({op})")))
            }
            TrainError::Tensor(TensorError::NonFinite { op })
            | TrainError::Objective(ObjectiveError::Tensor(TensorError::NonFinite { op })) => {
                non_finite(param.unwrap_or_else(|| format!("{op} after the graph output")))
            }
            TrainError::NonFinite { location, .. } => non_finite(location),
            other => other,
        }
    }
}

fn batch_len(inputs: &Prepared, config: &TrainConfig) -> usize {
    match config.objective {
        Objective::Supervised => inputs.images.shape()[0],
        Objective::Simclr => inputs.images.shape()[0] / 2,
    }
}

fn empty_record(name: &str, epochs: usize) -> StageRecord {
    StageRecord {
        name: name.to_string(),
        epochs,
        epoch_loss: Vec::with_capacity(epochs),
        epoch_metric: Vec::with_capacity(epochs),
        wall_seconds: 0.0,
        w_updates: 0,
        theta_updates: 0,
        theta_start: Vec::new(),
        theta_end: Vec::new(),
        decisions: Vec::new(),
        warnings: Vec::new(),
    }
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64().max(1e-9)
}

fn snapshot(graph: &ArchGraph) -> Vec<ThetaSnapshot> {
    graph
        .free_edges()
        .map(|(i, e)| ThetaSnapshot { edge: e.id.clone(), theta: graph.edge_params(i).expect("free edge").to_array() })
        .collect()
}

fn check_loss(value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(TrainError::Tensor(TensorError::NonFinite { op: "loss".into() }))
    }
}

fn backward(tape: &Tape, loss: Var) -> Result<Option<Gradients>> {
    match tape.backward(loss) {
        Ok(g) => Ok(Some(g)),
        Err(TensorError::EmptyTape) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[allow(clippy::too_many_arguments)]
fn batch_loss(
    graph: &ArchGraph,
    head: Option<&ProjectionHead>,
    config: &TrainConfig,
    tape: &mut Tape,
    b: &crate::graph::Bindings,
    hv: &[Var],
    inputs: &Prepared,
    mode: ForwardMode,
    step: u64,
) -> Result<Var> {
    let x = tape.constant(inputs.images.clone());
    let out = graph.forward(tape, b, x, mode, step)?;
    match (config.objective, head) {
        (Objective::Simclr, Some(head)) => {
            let z = head.project(tape, hv, out)?;
            Ok(ntxent(tape, z, config.temperature)?)
        }
        _ => Ok(cross_entropy(tape, out, &inputs.labels)?),
    }
}

fn locate_non_finite(graph: &ArchGraph, head: Option<&ProjectionHead>) -> Option<String> {
    for (i, e) in graph.edges.iter().enumerate() {
        if graph.edge_params(i).is_some_and(|p| !p.is_finite()) {
            return Some(format!("architecture parameters of edge '{}'", e.id));
        }
    }
    for e in &graph.edges {
        if e.weights.iter().any(|&w| !graph.weights[w].is_finite()) {
            return Some(format!("weights of edge '{}' ({})", e.id, e.op.label()));
        }
    }
    if head.is_some_and(|h| h.params.iter().any(|p| !p.is_finite())) {
        return Some("projection head parameters".into());
    }
    None
}

fn ensure_finite(graph: &ArchGraph, head: Option<&ProjectionHead>) -> Result<()> {
    match locate_non_finite(graph, head) {
        None => Ok(()),
        Some(location) => Err(TrainError::NonFinite { stage: String::new(), epoch: 0, batch: 0, location }),
    }
}

fn l2_rows(t: &Tensor) -> Result<Tensor> {
    Ok(forward(&PrimitiveOp::L2Normalize, &[t])?)
}

fn outputs(graph: &ArchGraph, data: &Dataset, mode: ForwardMode, step_base: u64) -> Result<Tensor> {
    let mut rows = Vec::new();
    let mut width = 0;
    for (ci, chunk) in data.sequential(EVAL_CHUNK).enumerate() {
        let out = graph.evaluate(&chunk.images, mode, step_base + ci as u64)?;
        width = out.numel() / out.shape()[0];
        rows.extend_from_slice(out.data());
    }
    Ok(Tensor::new(vec![data.len(), width], rows)?)
}

/// Fraction of rows whose arg-max (first on ties) equals the label.
pub(crate) fn top1(logits: &Tensor, labels: &[usize]) -> f64 {
    let k = logits.shape()[1];
    let correct = logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &y)| {
            let best = row.iter().enumerate().fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
            best == y
        })
        .count();
    correct as f64 / labels.len().max(1) as f64
}

fn metric(graph: &ArchGraph, data: &Data, objective: Objective, knn_k: usize, mode: ForwardMode) -> Result<f64> {
    match objective {
        Objective::Supervised => {
            let logits = outputs(graph, &data.test, mode, EVAL_STEP)?;
            Ok(top1(&logits, data.test.labels()))
        }
        Objective::Simclr => {
            let train = l2_rows(&outputs(graph, &data.train, mode, EVAL_TRAIN_FEATURES)?)?;
            let test = l2_rows(&outputs(graph, &data.test, mode, EVAL_STEP)?)?;
            let k = knn_k.min(data.train.len());
            Ok(knn_evaluate(&train, data.train.labels(), &test, data.test.labels(), k)?)
        }
    }
}

/// Held-out metric of a fixed graph.
pub fn evaluate(graph: &ArchGraph, data: &Data, objective: Objective, knn_k: usize) -> Result<f64> {
    if !graph.is_fixed() {
        return Err(TrainError::Config("evaluation needs a graph without free edges".into()));
    }
    metric(graph, data, objective, knn_k, ForwardMode::Original)
}

/// Runs `config.effective_arch_epochs()` alternating epochs on `graph`.
pub fn arch_train_stage(graph: &mut ArchGraph, data: &Data, config: &TrainConfig) -> Result<StageRecord> {
    let epochs = config.effective_arch_epochs();
    if epochs == 0 {
        return Err(TrainError::Config("the architecture stage needs arch_epochs >= 1".into()));
    }
    Session::new(graph, data, config)?.arch_stage(graph, epochs)
}

/// Runs `epochs` weight-only epochs on a fixed graph.
pub fn network_train_stage(graph: &mut ArchGraph, data: &Data, config: &TrainConfig, epochs: usize) -> Result<StageRecord> {
    Session::new(graph, data, config)?.network_stage(graph, epochs)
}

fn dataset_label(d: &Dataset) -> String {
    match &d.provenance {
        Provenance::Synthetic { spec } => format!(
            "synthetic({} classes, {}x{}x{}, sigma {}, seed {})",
            spec.num_classes, spec.channels, spec.height, spec.width, spec.noise_sigma, spec.seed
        ),
        Provenance::Cifar10 { .. } => "cifar10".into(),
    }
}

/// Architecture stage (when `arch_epochs > 0`), transform, weight-only
/// stage for the remaining epochs, final evaluation.
pub fn run_pipeline(graph: ArchGraph, data: &Data, config: &TrainConfig) -> Result<(ArchGraph, RunReport)> {
    let start = Instant::now();
    config.validate()?;
    let arch_epochs = config.effective_arch_epochs();
    let cost_before = graph.count_costs();
    let model = graph.name.clone();
    let mut graph = if arch_epochs == 0 {
        graph.into_original()
    } else {
        let mut g = graph;
        match config.mode {
            Mode::Cell => {
                let template = g
                    .cell_template
                    .clone()
                    .ok_or_else(|| TrainError::Config("cell mode needs a [graph.cells] template".into()))?;
                g.cell_group_edges(&template)?;
            }
            _ => g.init_arch_params(),
        }
        g
    };
    let mut session = Session::new(&graph, data, config)?;
    let mut stages = Vec::new();
    let mut discretization = Vec::new();
    let mut warnings = Vec::new();
    if arch_epochs > 0 {
        let mut rec = session.arch_stage(&mut graph, arch_epochs)?;
        let t = session.transform(&graph)?;
        rec.decisions = t.decisions.clone();
        rec.warnings = t.warnings.clone();
        discretization = t.decisions;
        warnings = t.warnings;
        graph = t.graph;
        stages.push(rec);
    }
    stages.push(session.network_stage(&mut graph, config.total_epochs - arch_epochs)?);
    let final_metric = session.metric(&graph, ForwardMode::Original)?;
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        model,
        dataset: dataset_label(&data.train),
        metric: match config.objective {
            Objective::Supervised => "top1_accuracy".into(),
            Objective::Simclr => "knn_accuracy".into(),
        },
        final_metric,
        wall_seconds: elapsed(start),
        cost_before,
        cost_after: graph.count_costs(),
        config: config.clone(),
        warnings,
        discretization,
        stages,
        fixed_graph: graph.to_desc(),
    };
    Ok((graph, report))
}
