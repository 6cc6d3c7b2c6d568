//! Optimizer, schedule, checkpoints, training loop and evaluation.

use samp_core::baseline::VariantKind;
use samp_core::data::{Sample, SceneSpec};
use samp_core::metrics::{fg_ari, masks_to_labels};
use samp_core::model::Preset;
use samp_core::train::*;
use samp_core::{ParamStore, SampError, Tensor};

fn scalar_store(value: f32) -> ParamStore<f32> {
    let mut s = ParamStore::new();
    s.add("p", Tensor::new(vec![1], vec![value]).unwrap()).unwrap();
    s
}

fn set_grad(store: &mut ParamStore<f32>, g: f32) {
    let id = store.id("p").unwrap();
    store.get_mut(id).tensor_mut().zero_grad();
    store.get_mut(id).tensor_mut().accumulate_grad(&[g]).unwrap();
}

fn value(store: &ParamStore<f32>) -> f32 {
    store.by_name("p").unwrap().data()[0]
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut s = scalar_store(0.7);
    let mut adam = AdamState::new(&s);
    for _ in 0..5 {
        set_grad(&mut s, 0.0);
        adam.step(&mut s, 0.1).unwrap();
    }
    assert_eq!(value(&s), 0.7);
    assert_eq!(adam.t, 5);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut s = scalar_store(1.0);
    let mut adam = AdamState::new(&s);
    set_grad(&mut s, 1.0);
    adam.step(&mut s, 0.1).unwrap();
    assert!((value(&s) - 0.9).abs() < 1e-6);
    for g in [-3.0f32, 0.5, 1e-3, -7e2] {
        let mut s = scalar_store(0.0);
        let mut adam = AdamState::new(&s);
        set_grad(&mut s, g);
        adam.step(&mut s, 0.01).unwrap();
        assert_eq!(value(&s).signum(), -g.signum());
    }
}

#[test]
fn adam_rejects_nan_gradients_by_name() {
    let mut s = scalar_store(1.0);
    let mut adam = AdamState::new(&s);
    set_grad(&mut s, f32::NAN);
    match adam.step(&mut s, 0.1) {
        Err(SampError::NonFiniteGradient { name }) => assert_eq!(name, "p"),
        other => panic!("expected a gradient error, got {other:?}"),
    }
    assert_eq!(value(&s), 1.0);
}

#[test]
fn gradient_clipping_bounds_the_norm() {
    let mut s = scalar_store(0.0);
    set_grad(&mut s, -10.0);
    assert_eq!(clip_grad_norm(&mut s, 2.0), 10.0);
    assert!((grad_norm(&s) - 2.0).abs() < 1e-6);
}

#[test]
fn learning_rate_schedule_examples() {
    assert_eq!(lr_at(0, 4e-4, 1000, 0.5, 10_000), 0.0);
    assert!((lr_at(1000, 4e-4, 1000, 0.5, 1_000_000_000) - 4e-4).abs() < 1e-9);
    let expect = 4e-4 * 0.5f64.powf(11_000.0 / 10_000.0);
    assert!((lr_at(11_000, 4e-4, 1000, 0.5, 10_000) - expect).abs() < 1e-15);
    assert_eq!(lr_at(7, 1e-3, 0, 1.0, 0), 1e-3);
}

#[test]
fn config_json_round_trip_and_validation() {
    let cfg = TrainConfig {
        n_slots: Some(8),
        grad_clip_norm: Some(1.0),
        snapshot_steps: vec![10, 20],
        ..TrainConfig::default()
    };
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), cfg);
    let partial: TrainConfig = serde_json::from_str(r#"{"steps": 5, "variant": "cross_attention"}"#).unwrap();
    assert_eq!((partial.steps, partial.variant, partial.batch_size), (5, VariantKind::CrossAttention, 32));
    assert!(serde_json::from_str::<TrainConfig>(r#"{"stepz": 5}"#).is_err());
    for bad in [
        TrainConfig { steps: 0, ..TrainConfig::default() },
        TrainConfig { decay_rate: 0.0, ..TrainConfig::default() },
        TrainConfig { decay_rate: 1.5, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

fn tiny_data(n: usize, seed: u64) -> Vec<Sample> {
    let spec = SceneSpec::tetromino((32, 32), seed);
    (0..n as u64).map(|i| spec.generate(1, i).unwrap()).collect()
}

fn quick_config(variant: VariantKind) -> TrainConfig {
    TrainConfig {
        preset: Preset::Mini,
        variant,
        batch_size: 2,
        steps: 4,
        warmup_steps: 2,
        checkpoint_every: 2,
        ..TrainConfig::default()
    }
}

fn losses(t: &Trainer) -> Vec<u32> {
    t.log().iter().map(|r| r.loss.to_bits()).collect()
}

#[test]
fn training_is_deterministic() {
    let data = tiny_data(6, 1);
    for variant in [VariantKind::Ssa, VariantKind::SlotAttention] {
        let run = || {
            let mut t = Trainer::new(quick_config(variant)).unwrap();
            t.run(&data, None, None, &mut |_| {}).unwrap();
            t
        };
        let (a, b) = (run(), run());
        assert_eq!(losses(&a), losses(&b), "{variant}");
        assert_eq!(a.store(), b.store());
        assert_eq!(a.log().len(), 4);
        assert_eq!(a.log()[0].lr, 0.0);
    }
}

#[test]
fn epochs_visit_every_sample_once() {
    let mut t = Trainer::new(TrainConfig {
        batch_size: 3,
        ..quick_config(VariantKind::Ssa)
    })
    .unwrap();
    let mut seen: Vec<usize> = (0..4).flat_map(|s| t.batch_indices(s, 12)).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..12).collect::<Vec<_>>());
    let again = t.batch_indices(1, 12);
    assert_eq!(again, t.batch_indices(1, 12));
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let data = tiny_data(4, 2);
    let mut t = Trainer::new(quick_config(VariantKind::Ssa)).unwrap();
    t.set_dataset_fingerprint("abc123");
    t.run(&data, None, None, &mut |_| {}).unwrap();
    let ck = t.checkpoint();
    let bytes = ck.to_bytes().unwrap();
    assert_eq!(&bytes[..4], b"SMPC");
    let back = Checkpoint::from_bytes(&bytes, std::path::Path::new("mem")).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert_eq!(back.dataset_fingerprint.as_deref(), Some("abc123"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.smpc");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    let mut corrupt = bytes.clone();
    corrupt.truncate(bytes.len() - 3);
    assert!(Checkpoint::from_bytes(&corrupt, &path).is_err());
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let data = tiny_data(5, 3);
    let cfg = TrainConfig {
        steps: 6,
        ..quick_config(VariantKind::Ssa)
    };
    let mut full = Trainer::new(cfg.clone()).unwrap();
    full.run(&data, None, None, &mut |_| {}).unwrap();

    let mut first = Trainer::new(TrainConfig { steps: 3, ..cfg.clone() }).unwrap();
    first.run(&data, None, None, &mut |_| {}).unwrap();
    let mut ck = Checkpoint::from_bytes(&first.checkpoint().to_bytes().unwrap(), std::path::Path::new("mem")).unwrap();
    ck.config.steps = 6;
    let mut resumed = Trainer::from_checkpoint(ck, first.log().to_vec()).unwrap();
    resumed.run(&data, None, None, &mut |_| {}).unwrap();
    assert_eq!(losses(&resumed), losses(&full));
    assert_eq!(resumed.store(), full.store());
}

#[test]
fn run_directory_layout() {
    let data = tiny_data(4, 4);
    let dir = tempfile::tempdir().unwrap();
    let rd = RunDir::create(dir.path()).unwrap();
    let mut t = Trainer::new(TrainConfig {
        eval_every: 2,
        eval_samples: 2,
        snapshot_steps: vec![1],
        ..quick_config(VariantKind::Ssa)
    })
    .unwrap();
    t.run(&data, Some(&data), Some(&rd), &mut |_| {}).unwrap();
    assert!(rd.checkpoint_path(2).is_file() && rd.checkpoint_path(4).is_file());
    assert_eq!(std::fs::read(rd.last_path()).unwrap(), std::fs::read(rd.checkpoint_path(4)).unwrap());
    let metrics = std::fs::read_to_string(rd.metrics_path()).unwrap();
    assert_eq!(metrics.lines().next(), Some("step,loss,lr,fg_ari"));
    assert_eq!(metrics.lines().count(), 5);
    assert_eq!(t.log().iter().filter(|r| r.fg_ari.is_some()).count(), 2);
    assert!(rd.images_dir().join("step_000001_recon.ppm").is_file());
    assert!(rd.log_path().is_file());
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(rd.config_path()).unwrap()).unwrap();
    assert!(cfg.get("train").is_some() && cfg.get("model").is_some());
}

#[test]
fn non_finite_parameters_abort_training() {
    let data = tiny_data(2, 5);
    let ck = {
        let t = Trainer::new(quick_config(VariantKind::Ssa)).unwrap();
        let mut ck = t.checkpoint();
        let id = ck.params.id("decoder.conv3.bias").unwrap();
        ck.params.get_mut(id).tensor_mut().data_mut()[0] = f32::NAN;
        ck
    };
    let mut t = Trainer::from_checkpoint(ck, Vec::new()).unwrap();
    assert!(matches!(t.train_step(&data), Err(SampError::NonFiniteLoss { step: 0 })));
}

#[test]
fn evaluation_is_deterministic_and_checks_the_image_size() {
    let data = tiny_data(3, 6);
    for variant in [VariantKind::Ssa, VariantKind::SlotAttention] {
        let t = Trainer::new(quick_config(variant)).unwrap();
        let a = evaluate(t.net(), t.store(), &data, 2, 0).unwrap();
        let b = evaluate(t.net(), t.store(), &data, 2, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scores.len(), 3);
        assert!(a.to_csv().starts_with("sample_index,fg_ari\n"));
        assert_eq!(a.summary_json()["n_samples"], 3);
    }
    let t = Trainer::new(quick_config(VariantKind::Ssa)).unwrap();
    let small: Vec<Sample> = (0..2).map(|i| SceneSpec::tetromino((16, 16), 0).generate(1, i).unwrap()).collect();
    assert!(matches!(evaluate(t.net(), t.store(), &small, 2, 0), Err(SampError::Config(_))));
}

#[test]
fn oracle_masks_score_one() {
    for s in tiny_data(10, 7) {
        let n = 4;
        let plane = s.labels.len();
        let mut w = vec![0.0f32; n * plane];
        for (p, &l) in s.labels.iter().enumerate() {
            w[l as usize * plane + p] = 1.0;
        }
        let pred = masks_to_labels(&w, n);
        let gt: Vec<u32> = s.labels.iter().map(|&l| l as u32).collect();
        assert_eq!(fg_ari(&pred, &gt, 0).unwrap(), 1.0);
    }
}
