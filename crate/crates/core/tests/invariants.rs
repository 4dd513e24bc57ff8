mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use proxyless::data::{batches, Dataset, generate_synthetic, SyntheticSpec};
use proxyless::graph::{discretize, ArchParams, CandidateSet, ForwardMode, OpChoice};
use proxyless::objectives::{augment_pair, cross_entropy_value, knn_evaluate, ntxent_value, AugmentPolicy, Batch};
use proxyless::tensor::{forward, seeded_rng, stream_rng, PrimitiveOp, Tensor};
use rand::Rng;

fn unit_rows(x: &Tensor) -> Tensor {
    forward(&PrimitiveOp::L2Normalize, &[x]).unwrap()
}

fn small_dataset(n_per_class: usize, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        num_classes: 2,
        height: 4,
        width: 4,
        samples_per_class: n_per_class,
        test_samples_per_class: 1,
        seed,
        ..Default::default()
    };
    generate_synthetic(&spec).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn init_mixed_equals_original(seed in any::<u64>()) {
        let (graph, x, _, _) = random_case(seed, 6);
        let mixed = graph.evaluate(&x, ForwardMode::Mixed, 1).unwrap();
        let original = graph.evaluate(&x, ForwardMode::Original, 1).unwrap();
        prop_assert!(mixed.bitwise_eq(&original));
    }

    #[test]
    fn transform_matches_one_hot_mixed(seed in any::<u64>()) {
        let (mut graph, x, _, mut rng) = random_case(seed, 6);
        let choices = random_choices(&graph, &mut rng);
        graph.set_one_hot(|i| choices[i].unwrap());
        let t = graph.transform().unwrap();
        prop_assert!(t.graph.is_fixed());
        for d in &t.decisions {
            let i = graph.edge_index(&d.edge).unwrap();
            prop_assert_eq!(Some(d.choice), choices[i]);
        }
        let mixed = graph.evaluate(&x, ForwardMode::Mixed, 2).unwrap();
        let fixed = t.graph.evaluate(&x, ForwardMode::Original, 2).unwrap();
        prop_assert_eq!(mixed.shape(), fixed.shape());
        prop_assert_eq!(mixed.data(), fixed.data());
        prop_assert!(t.graph.count_costs().params <= graph.count_costs().params);
    }

    #[test]
    fn discretize_is_restricted_argmax(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, identity in any::<bool>()) {
        let cands = if identity { CandidateSet::FULL } else { CandidateSet::NO_IDENTITY };
        let p = ArchParams::new(a, if identity { b } else { 0.0 }, c);
        let choice = discretize(&p, cands).unwrap();
        prop_assert!(cands.contains(choice));
        let value = |ch: OpChoice| match ch {
            OpChoice::None => p.theta_none,
            OpChoice::Identity => p.theta_id,
            OpChoice::Same => p.theta_same,
        };
        for other in cands.choices() {
            prop_assert!(value(choice) >= value(other));
        }
    }

    #[test]
    fn batches_cover_dataset_once(n_per_class in 1usize..20, bs in 1usize..9, seed in any::<u64>()) {
        let data = small_dataset(n_per_class, 3);
        let sizes: Vec<usize> = batches(&data, bs, &mut stream_rng(seed, 0)).map(|b| b.len()).collect();
        let n = data.len();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes[..sizes.len() - 1].iter().all(|&s| s == bs));
        let order = batches(&data, bs, &mut stream_rng(seed, 0)).order().to_vec();
        let unique: BTreeSet<usize> = order.iter().copied().collect();
        prop_assert_eq!(unique.len(), n);
        prop_assert_eq!(order.len(), n);
        let joined: Vec<f64> = batches(&data, bs, &mut stream_rng(seed, 0))
            .flat_map(|b| b.images.into_data())
            .collect();
        let expected = data.gather(&order).images;
        prop_assert_eq!(joined.as_slice(), expected.data());
    }

    #[test]
    fn cross_entropy_nonnegative(n in 1usize..6, k in 2usize..6, seed in any::<u64>(), scale in 0.0f64..50.0) {
        let mut rng = seeded_rng(seed);
        let logits = random_tensor(&[n, k], &mut rng);
        let scaled = Tensor::new(vec![n, k], logits.data().iter().map(|v| v * scale).collect()).unwrap();
        let labels = random_labels(n, k, &mut rng);
        let loss = cross_entropy_value(&scaled, &labels).unwrap();
        prop_assert!(loss >= 0.0);
        let constant = Tensor::full(&[n, k], scale);
        let uniform = cross_entropy_value(&constant, &labels).unwrap();
        prop_assert!((uniform - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ntxent_invariant_to_pair_relabeling(n in 1usize..5, d in 2usize..5, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let z = unit_rows(&random_tensor(&[2 * n, d], &mut rng));
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut data = Vec::with_capacity(2 * n * d);
        for half in 0..2 {
            for &p in &perm {
                let r = half * n + p;
                data.extend_from_slice(&z.data()[r * d..(r + 1) * d]);
            }
        }
        let permuted = Tensor::new(vec![2 * n, d], data).unwrap();
        let a = ntxent_value(&z, 0.5).unwrap();
        let b = ntxent_value(&permuted, 0.5).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn knn_invariant_to_positive_scaling(seed in any::<u64>(), scale in 0.01f64..100.0, k in 1usize..8) {
        let mut rng = seeded_rng(seed);
        let train = random_tensor(&[20, 3], &mut rng);
        let test = random_tensor(&[10, 3], &mut rng);
        let train_labels = random_labels(20, 3, &mut rng);
        let test_labels = random_labels(10, 3, &mut rng);
        let scaled = |t: &Tensor| Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * scale).collect()).unwrap();
        let base = knn_evaluate(&unit_rows(&train), &train_labels, &unit_rows(&test), &test_labels, k).unwrap();
        let other = knn_evaluate(&unit_rows(&scaled(&train)), &train_labels, &unit_rows(&scaled(&test)), &test_labels, k).unwrap();
        prop_assert_eq!(base, other);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn augment_pair_reproducible(seed in any::<u64>()) {
        let data = small_dataset(3, 9);
        let batch: Batch = data.gather(&[0, 1, 2, 3]);
        let policy = AugmentPolicy::default();
        let a = augment_pair(&batch, &policy, &mut stream_rng(seed, 5));
        let b = augment_pair(&batch, &policy, &mut stream_rng(seed, 5));
        prop_assert!(a.view_a.bitwise_eq(&b.view_a));
        prop_assert!(a.view_b.bitwise_eq(&b.view_b));
        prop_assert_eq!(a.view_a.shape(), batch.images.shape());
        prop_assert!(a.view_a.data().iter().chain(a.view_b.data()).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn l2_normalize_rows_are_unit_or_zero(seed in any::<u64>(), zero_row in 0usize..4) {
        let mut rng = seeded_rng(seed);
        let mut x = random_tensor(&[4, 3], &mut rng);
        x.data_mut()[zero_row * 3..zero_row * 3 + 3].fill(0.0);
        let y = unit_rows(&x);
        for (r, row) in y.data().chunks(3).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r == zero_row {
                prop_assert_eq!(norm, 0.0);
            } else {
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tape_replay_is_bitwise(seed in any::<u64>()) {
        let (graph, x, _, _) = random_case(seed, 3);
        let mut tape = proxyless::tensor::Tape::new();
        let b = graph.bind(&mut tape, true, true);
        let xv = tape.constant(x);
        let y = graph.forward(&mut tape, &b, xv, ForwardMode::Mixed, 4).unwrap();
        let replayed = tape.replay().unwrap();
        prop_assert!(replayed.value(y).bitwise_eq(tape.value(y)));
    }

    #[test]
    fn synthetic_generation_is_deterministic(seed in any::<u64>()) {
        let spec = SyntheticSpec { samples_per_class: 3, test_samples_per_class: 2, height: 6, width: 6, seed, ..Default::default() };
        let (a, at) = generate_synthetic(&spec).unwrap();
        let (b, bt) = generate_synthetic(&spec).unwrap();
        prop_assert!(a.gather(&(0..a.len()).collect::<Vec<_>>()).images.bitwise_eq(&b.gather(&(0..b.len()).collect::<Vec<_>>()).images));
        prop_assert_eq!(at.labels(), bt.labels());
        let all = a.gather(&(0..a.len()).collect::<Vec<_>>()).images;
        prop_assert!(all.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn cell_mode_keeps_tied_theta_identical_in_training() {
    use proxyless::graph::ArchGraph;
    use proxyless::train::{Data, Mode, TrainConfig};
    let desc = three_cell_desc(3);
    let (mut graph, _) = ArchGraph::build(&desc, &mut seeded_rng(2)).unwrap();
    graph.cell_group_edges(desc.cells.as_ref().unwrap()).unwrap();
    let spec = SyntheticSpec {
        num_classes: 3,
        height: 4,
        width: 4,
        samples_per_class: 8,
        test_samples_per_class: 2,
        ..Default::default()
    };
    let (train, test) = generate_synthetic(&spec).unwrap();
    let data = Data { train, test };
    let config = TrainConfig {
        total_epochs: 2,
        arch_epochs: Some(2),
        mode: Mode::Cell,
        batch_size: 4,
        theta_optimizer: proxyless::tensor::OptimizerKind::adam(0.05),
        ..Default::default()
    };
    let rec = proxyless::train::arch_train_stage(&mut graph, &data, &config).unwrap();
    assert!(rec.theta_updates > 0);
    for group in &graph.cell_groups {
        let first = graph.edge_params(group[0]).unwrap();
        assert_ne!(first, ArchParams::INIT);
        for &ei in group {
            assert_eq!(graph.edge_params(ei).unwrap().to_array(), first.to_array());
        }
    }
    let snap = |id: &str| rec.theta_end.iter().find(|s| s.edge == id).unwrap().theta;
    for pos in ["conv", "act"] {
        let lead = snap(&format!("cell0_{pos}"));
        for k in 1..3 {
            assert_eq!(snap(&format!("cell{k}_{pos}")), lead);
        }
    }
}
