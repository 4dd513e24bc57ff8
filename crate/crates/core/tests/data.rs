use std::path::Path;

use proxyless::data::{
    encode_cifar_records, generate_synthetic, load_cifar10, parse_cifar_records, DataError, SyntheticSpec,
    CIFAR_RECORD_BYTES,
};
use proxyless::graph::{ArchGraph, EdgeDesc, GraphDesc};
use proxyless::report::parse_config;
use proxyless::tensor::{OptimizerKind, RunRng};
use proxyless::train::{init_rng, run_pipeline, Data, Mode, TrainConfig};
use rand::seq::SliceRandom;

fn workspace_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn linear_probe_separates_noiseless_two_class_task() {
    let spec = SyntheticSpec { num_classes: 2, noise_sigma: 0.0, samples_per_class: 100, ..Default::default() };
    let (train, test) = generate_synthetic(&spec).unwrap();
    // A full-image convolution followed by pooling is a linear map of the
    // raw pixels.
    let desc = GraphDesc {
        name: "probe".into(),
        input: "in".into(),
        output: "logits".into(),
        input_shape: vec![3, 16, 16],
        nodes: ["in", "map", "logits"].iter().map(|s| s.to_string()).collect(),
        edges: vec![EdgeDesc::conv("in", "map", 16, 1, 0, 2), EdgeDesc::new("map", "logits", "global_avg_pool")],
        cells: None,
    };
    let (graph, _) = ArchGraph::build(&desc, &mut init_rng(0)).unwrap();
    let config = TrainConfig {
        total_epochs: 30,
        mode: Mode::Baseline,
        batch_size: 16,
        w_optimizer: OptimizerKind::sgd(0.05, 0.9),
        ..Default::default()
    };
    let (_, report) = run_pipeline(graph, &Data { train, test }, &config).unwrap();
    assert_eq!(report.final_metric, 1.0);
}

fn toy_baseline(shuffle: Option<u64>) -> f64 {
    let mut parsed =
        parse_config(&workspace_file("configs/toy_noise.toml"), &["graph.edges.6.sigma=0.0".into()]).unwrap();
    parsed.config.train.mode = Mode::Baseline;
    let spec = match &parsed.config.data {
        proxyless::report::DataSpec::Synthetic(s) => s.clone(),
        other => panic!("unexpected data spec {other:?}"),
    };
    assert_eq!((spec.num_classes, spec.samples_per_class, spec.noise_sigma), (4, 200, 0.3));
    let (mut train, test) = generate_synthetic(&spec).unwrap();
    if let Some(seed) = shuffle {
        let mut labels = train.labels().to_vec();
        let mut rng: RunRng = init_rng(seed);
        labels.shuffle(&mut rng);
        train = train.with_labels(labels).unwrap();
    }
    run_pipeline(parsed.graph, &Data { train, test }, &parsed.config.train).unwrap().1.final_metric
}

#[test]
fn toy_task_is_learnable_and_shuffled_labels_are_not() {
    let real = toy_baseline(None);
    assert!((0.85..=1.0).contains(&real), "baseline accuracy {real}");
    let control = toy_baseline(Some(13));
    assert!((control - 0.25).abs() <= 0.05, "shuffled-label accuracy {control}");
}

#[test]
fn cifar_files_round_trip_through_loader() {
    let dir = tempfile::tempdir().unwrap();
    let mut originals = Vec::new();
    for (i, name) in
        ["data_batch_1", "data_batch_2", "data_batch_3", "data_batch_4", "data_batch_5", "test_batch"].iter().enumerate()
    {
        let labels: Vec<usize> = (0..3).map(|r| (i + r) % 10).collect();
        let pixels: Vec<u8> = (0..3 * 3072).map(|p| ((p * 7 + i) % 256) as u8).collect();
        let bytes = encode_cifar_records(&labels, &pixels);
        assert_eq!(bytes.len(), 3 * CIFAR_RECORD_BYTES);
        std::fs::write(dir.path().join(format!("{name}.bin")), &bytes).unwrap();
        originals.push(bytes);
    }
    let (train, test) = load_cifar10(dir.path()).unwrap();
    assert_eq!((train.len(), test.len()), (15, 3));
    assert_eq!(train.image_shape(), [3, 32, 32]);
    let (labels, pixels) = parse_cifar_records(&originals[5], Path::new("test_batch.bin")).unwrap();
    assert_eq!(encode_cifar_records(&labels, &pixels), originals[5]);
    assert_eq!(test.labels(), labels.as_slice());
    assert_eq!(test.pixel(3072 + 5), pixels[3072 + 5] as f64 / 255.0);

    std::fs::remove_file(dir.path().join("data_batch_3.bin")).unwrap();
    match load_cifar10(dir.path()) {
        Err(DataError::FileMissing(p)) => assert!(p.ends_with("data_batch_3.bin")),
        other => panic!("expected FileMissing, got {other:?}"),
    }
}
