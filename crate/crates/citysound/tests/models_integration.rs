//! Architecture and training-loop checks: shape audits against enumeration,
//! multi-task degeneration to the single-task gradients, checkpoint
//! round-trips, determinism, and capacity sanity.

mod common;

use citysound::dataset::{format_clip_name, parse_clip_name, ClipMeta, DatasetSplit, CITIES, SCENES};
use citysound::features::FeatureMatrix;
use citysound::labels::LabelScheme;
use citysound::models::{
    build_baseline, build_multitask, load_checkpoint, predict, save_checkpoint, train,
    BranchPoint, FeatureStore, ModelConfig, SplitMetrics,
};
use citysound::nnet::{
    categorical_cross_entropy, LayerSpec, Mode, Network, Tensor4,
};
use common::{same_padding_output_by_enumeration, TestRng};

/// Composed stack shapes match the window-enumeration oracle for every
/// input in frames 32..=64, bins 16..=32, plus the full-scale audit.
#[test]
fn shape_audit_against_enumeration_oracle() {
    let (trunk, heads) = build_baseline(6, LabelScheme::City6).unwrap();
    for frames in 32..=64usize {
        for bins in 16..=32usize {
            let mut shape = [frames, bins, 1];
            for spec in &trunk {
                let expected = match *spec {
                    LayerSpec::Conv2d { filters, stride, .. } => [
                        same_padding_output_by_enumeration(shape[0], stride),
                        same_padding_output_by_enumeration(shape[1], stride),
                        filters,
                    ],
                    LayerSpec::MaxPool2d { stride, .. } => [
                        same_padding_output_by_enumeration(shape[0], stride),
                        same_padding_output_by_enumeration(shape[1], stride),
                        shape[2],
                    ],
                    LayerSpec::Flatten => [1, 1, shape[0] * shape[1] * shape[2]],
                    LayerSpec::Dense { units } => [1, 1, units],
                    _ => shape,
                };
                shape = spec.output_shape(shape);
                assert_eq!(shape, expected, "{spec:?} at {frames}x{bins}");
            }
            for spec in &heads[0] {
                shape = spec.output_shape(shape);
            }
            assert_eq!(shape, [1, 1, 6]);
        }
    }

    // full-scale chain: (938,128) -> (469,64) -> (235,32) -> (118,16)
    let mut shape = [938usize, 128, 1];
    let mut pooled = Vec::new();
    for spec in &trunk {
        shape = spec.output_shape(shape);
        if matches!(spec, LayerSpec::MaxPool2d { .. }) {
            pooled.push((shape[0], shape[1]));
        }
    }
    assert_eq!(pooled, vec![(469, 64), (235, 32), (118, 16)]);
}

fn synthetic_store(
    metas: &[ClipMeta],
    frames: usize,
    bins: usize,
    seed: u64,
) -> FeatureStore {
    let mut rng = TestRng::new(seed);
    let mut store = FeatureStore::new();
    for meta in metas {
        // city lights up a band of bins, scene shifts the overall level
        let city = meta.city.index();
        let scene_level = meta.scene.index() as f64 * 0.1;
        let fm = FeatureMatrix {
            values: (0..frames * bins)
                .map(|i| {
                    let b = i % bins;
                    let hot = if b * 6 / bins == city { 2.0 } else { 0.0 };
                    (hot + scene_level + rng.range(-0.1, 0.1)) as f32
                })
                .collect(),
            n_frames: frames,
            n_bins: bins,
        };
        store.insert(meta.id.clone(), fm);
    }
    store
}

fn all_pair_metas(per_pair: usize) -> Vec<ClipMeta> {
    SCENES
        .iter()
        .flat_map(|&s| {
            CITIES.iter().flat_map(move |&c| {
                (0..per_pair).map(move |i| {
                    parse_clip_name(&format_clip_name(s, c, i as u32, i as u32, "a")).unwrap()
                })
            })
        })
        .collect()
}

/// Multitask with weights (1, 0) must backpropagate exactly the single-task
/// scene gradients through the shared trunk and scene head; symmetrically
/// (0, 1) matches the city model once the city heads hold equal parameters.
#[test]
fn multitask_degenerates_to_single_task_gradients() {
    let input = [12, 10, 1];
    let seed = 42;
    let batch = 4;
    let mut rng = TestRng::new(88);
    let x = common::random_tensor([batch, input[0], input[1], 1], &mut rng, -1.0, 1.0);

    let mut scene_target = Tensor4::<f64>::zeros([batch, 1, 1, 10]);
    let mut city_target = Tensor4::<f64>::zeros([batch, 1, 1, 6]);
    for s in 0..batch {
        scene_target.data[s * 10 + rng.below(10)] = 1.0;
        city_target.data[s * 6 + rng.below(6)] = 1.0;
    }

    // scene side: weights (1, 0)
    let (trunk, heads) = build_baseline(10, LabelScheme::Scene10).unwrap();
    let mut single = Network::<f64>::from_specs(input, &trunk, &heads, seed).unwrap();
    let (mt_trunk, mt_heads) = build_multitask(BranchPoint::AfterDenseBlock);
    let mut multi = Network::<f64>::from_specs(input, &mt_trunk, &mt_heads, seed).unwrap();

    single.zero_grad();
    let out = single.forward(&x, Mode::Train).unwrap();
    let (_, g) = categorical_cross_entropy(&out[0], &scene_target).unwrap();
    single.backward(&[g]).unwrap();
    let single_grads = single.grads_flat();

    multi.zero_grad();
    let outs = multi.forward(&x, Mode::Train).unwrap();
    let (_, gs) = categorical_cross_entropy(&outs[0], &scene_target).unwrap();
    let (_, gc) = categorical_cross_entropy(&outs[1], &city_target).unwrap();
    let zero_gc = Tensor4::from_vec(vec![0.0; gc.data.len()], gc.shape).unwrap();
    multi.backward(&[gs, zero_gc]).unwrap();
    let multi_grads = multi.grads_flat();

    assert!(multi_grads.len() > single_grads.len());
    for (i, (a, b)) in single_grads.iter().zip(&multi_grads).enumerate() {
        assert!((a - b).abs() <= 1e-12, "scene-side grad {i}: {a} vs {b}");
    }

    // city side: weights (0, 1), city heads forced equal first
    let (trunk6, heads6) = build_baseline(6, LabelScheme::City6).unwrap();
    let mut single_city = Network::<f64>::from_specs(input, &trunk6, &heads6, seed).unwrap();
    let mut multi2 = Network::<f64>::from_specs(input, &mt_trunk, &mt_heads, seed).unwrap();
    {
        let single_params = single_city.params();
        let n = single_params.len();
        let copy: Vec<Vec<f64>> =
            single_params[n - 2..].iter().map(|p| p.value.clone()).collect();
        let mut mp = multi2.params_mut();
        let m = mp.len();
        for (dst, src) in mp[m - 2..].iter_mut().zip(copy) {
            dst.value = src;
        }
    }

    single_city.zero_grad();
    let out = single_city.forward(&x, Mode::Train).unwrap();
    let (_, g) = categorical_cross_entropy(&out[0], &city_target).unwrap();
    single_city.backward(&[g]).unwrap();
    let city_grads = single_city.grads_flat();

    multi2.zero_grad();
    let outs = multi2.forward(&x, Mode::Train).unwrap();
    let (_, gs) = categorical_cross_entropy(&outs[0], &scene_target).unwrap();
    let (_, gc) = categorical_cross_entropy(&outs[1], &city_target).unwrap();
    let zero_gs = Tensor4::from_vec(vec![0.0; gs.data.len()], gs.shape).unwrap();
    multi2.backward(&[zero_gs, gc]).unwrap();
    let multi_grads = multi2.grads_flat();

    // trunk gradients first, then the city head's at the very end
    let trunk_len = trunk_param_len(&single_city);
    for i in 0..trunk_len {
        assert!(
            (city_grads[i] - multi_grads[i]).abs() <= 1e-12,
            "city-side trunk grad {i}"
        );
    }
    let tail = city_grads.len() - trunk_len; // city head params
    for i in 0..tail {
        let a = city_grads[trunk_len + i];
        let b = multi_grads[multi_grads.len() - tail + i];
        assert!((a - b).abs() <= 1e-12, "city-head grad {i}: {a} vs {b}");
    }
}

fn trunk_param_len(net: &Network<f64>) -> usize {
    net.trunk
        .iter()
        .flat_map(|l| l.params())
        .map(|p| p.len())
        .sum()
}

#[test]
fn memorization_of_32_samples() {
    let metas: Vec<ClipMeta> = all_pair_metas(1).into_iter().take(32).collect();
    let store = synthetic_store(&metas, 16, 12, 5);
    let split = DatasetSplit { train: metas, validation: vec![], test: vec![] };

    let mut cfg = ModelConfig::new(LabelScheme::City6, [16, 12, 1]);
    cfg.epochs = 300;
    cfg.seed = 9;
    cfg.early_stop_train_loss = Some(0.05);
    let model = train::<f64>(&cfg, &split, &store).unwrap();
    assert!(model.aborted.is_none());
    let losses: Vec<f64> = model
        .training_log
        .iter()
        .map(|e| match e.train {
            SplitMetrics::Single { loss, .. } => loss,
            _ => unreachable!(),
        })
        .collect();
    let reached = losses.iter().any(|&l| l < 0.05);
    assert!(
        reached,
        "training loss never fell below 0.05 in {} epochs (first 5: {:?}, last 5: {:?})",
        losses.len(),
        &losses[..5.min(losses.len())],
        &losses[losses.len().saturating_sub(5)..]
    );
}

#[test]
fn checkpoint_roundtrip_keeps_predictions_bit_identical() {
    let metas = all_pair_metas(2);
    let store = synthetic_store(&metas, 12, 10, 6);
    let split = DatasetSplit {
        train: metas.clone(),
        validation: vec![],
        test: metas.clone(),
    };

    for scheme in [LabelScheme::City6, LabelScheme::Multitask, LabelScheme::Multilabel16] {
        let mut cfg = ModelConfig::new(scheme, [12, 10, 1]);
        cfg.epochs = 2;
        cfg.seed = 31;
        let mut model = train::<f32>(&cfg, &split, &store).unwrap();
        let before = predict(&mut model, &split.test, &store, 32).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.csnn");
        save_checkpoint(&model, &path).unwrap();
        let mut loaded = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(loaded.scheme, scheme);
        let after = predict(&mut loaded, &split.test, &store, 32).unwrap();

        assert_eq!(before.len(), after.len());
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.scores, b.scores, "{scheme}: scores differ after round trip");
        }
    }
}

#[test]
fn same_seed_reproduces_training_log_and_checkpoint() {
    let metas = all_pair_metas(3);
    let store = synthetic_store(&metas, 12, 10, 7);
    let n = metas.len();
    let split = DatasetSplit {
        train: metas[..n / 2].to_vec(),
        validation: metas[n / 2..].to_vec(),
        test: vec![],
    };

    let mut cfg = ModelConfig::new(LabelScheme::City6, [12, 10, 1]);
    cfg.epochs = 3;
    cfg.seed = 77;

    let a = train::<f32>(&cfg, &split, &store).unwrap();
    let b = train::<f32>(&cfg, &split, &store).unwrap();
    assert_eq!(a.training_log.len(), b.training_log.len());
    for (x, y) in a.training_log.iter().zip(&b.training_log) {
        assert_eq!(x.train, y.train);
        assert_eq!(x.validation, y.validation);
    }

    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csnn"), dir.path().join("b.csnn"));
    save_checkpoint(&a, &pa).unwrap();
    save_checkpoint(&b, &pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
}

#[test]
fn multitask_log_carries_four_metric_columns() {
    let metas = all_pair_metas(2);
    let store = synthetic_store(&metas, 12, 10, 8);
    let split = DatasetSplit {
        train: metas.clone(),
        validation: metas.clone(),
        test: vec![],
    };
    let mut cfg = ModelConfig::new(LabelScheme::Multitask, [12, 10, 1]);
    cfg.epochs = 1;
    let model = train::<f32>(&cfg, &split, &store).unwrap();
    match model.training_log[0].train {
        SplitMetrics::Dual { .. } => {}
        _ => panic!("multitask log rows must carry per-head metrics"),
    }
}
