use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::features::{FeatureKind, FeatureTensor};
use crate::rng;
use crate::supervision::{TargetFrame, TrainingTarget};

fn small_config(variant: Variant) -> CrnnConfig {
    CrnnConfig {
        conv_channels: [4, 4, 8, 8],
        gru_hidden: 8,
        fc1_dim: 8,
        in_channels: 2,
        input_frames: if variant == Variant::CnnF { 80 } else { 64 },
        bins: 16,
        ..CrnnConfig::desk(variant, 2)
    }
}

fn random_features(cfg: &CrnnConfig, seed: u64) -> FeatureTensor {
    let mut r = rng::stream(seed, 1);
    let n = cfg.in_channels * cfg.input_frames * cfg.bins;
    let data = (0..n).map(|_| r.random_range(-1.0f32..1.0)).collect();
    FeatureTensor::new(FeatureKind::GccPhat, cfg.in_channels, cfg.input_frames, cfg.bins, data, "rand").unwrap()
}

fn target(view: usize, frames: &[(Option<f64>, bool)]) -> TrainingTarget {
    TrainingTarget {
        view,
        frames: frames.iter().map(|&(x, c)| TargetFrame { x_hat: x, c_hat: c, mask: x.is_some() }).collect(),
    }
}

#[test]
fn loss_hand_examples() {
    let t = target(0, &[(Some(0.7), true)]);
    let l = loss(&[Prediction { x: 0.5, confidence: 1.0 }], &t).unwrap();
    assert!((l - 0.04).abs() < 1e-12);
    let t = target(0, &[(None, false)]);
    let l = loss(&[Prediction { x: 0.9, confidence: 0.3 }], &t).unwrap();
    assert!((l - 0.09).abs() < 1e-12);
    let t = target(0, &[(Some(0.25), true), (None, false)]);
    let perfect = [Prediction { x: 0.25, confidence: 1.0 }, Prediction { x: 0.1, confidence: 0.0 }];
    assert_eq!(loss(&perfect, &t).unwrap(), 0.0);
    assert!(loss(&perfect[..1], &t).is_err());
}

#[test]
fn zero_weights_give_one_half() {
    let cfg = small_config(Variant::Crnn);
    let mut p = CrnnParams::<f32>::init(&cfg, 3).unwrap();
    p.values.iter_mut().for_each(|v| *v = 0.0);
    for pred in forward(&p, &random_features(&cfg, 1), 4).unwrap() {
        assert_eq!(pred.x, 0.5);
        assert_eq!(pred.confidence, 0.5);
    }
}

#[test]
fn desk_trunk_shape_for_two_second_chunk() {
    let cfg = CrnnConfig::desk(Variant::Crnn, 1);
    let p = CrnnParams::<f32>::init(&cfg, 0).unwrap();
    let x = vec![0.1f32; 960 * 64];
    let pass = forward_batch(&p, &x, 1, &[0], BnMode::Running).unwrap();
    assert_eq!(pass.trunk_shape, (128, 60, 4));
    assert_eq!(pass.outputs.len(), 60 * 2);
    assert_eq!(CrnnConfig::desk(Variant::CnnF, 1).output_frames(), 5);
}

#[test]
fn shape_errors() {
    let cfg = small_config(Variant::Crnn);
    let p = CrnnParams::<f32>::init(&cfg, 0).unwrap();
    let mut f = random_features(&cfg, 0);
    assert!(forward(&p, &f, 11).is_err());
    f.bins = 8;
    f.data.truncate(cfg.in_channels * cfg.input_frames * 8);
    assert!(forward(&p, &f, 0).is_err());
}

#[test]
fn dead_one_hot_rows_make_views_interchangeable() {
    let cfg = small_config(Variant::Crnn);
    let mut p = CrnnParams::<f32>::init(&cfg, 9).unwrap();
    let fc2 = p.layout.find("fc2.weight").unwrap().offset;
    let cw = cfg.fc1_dim + cfg.n_views;
    for row in 0..2 {
        for v in 0..cfg.n_views {
            p.values[fc2 + row * cw + cfg.fc1_dim + v] = 0.0;
        }
    }
    let f = random_features(&cfg, 2);
    let base = forward(&p, &f, 0).unwrap();
    for v in 1..cfg.n_views {
        assert_eq!(forward(&p, &f, v).unwrap(), base);
    }
}

#[test]
fn running_stats_equal_to_batch_stats_reproduce_train_mode() {
    let cfg = small_config(Variant::Crnn);
    let mut p = CrnnParams::<f64>::init(&cfg, 4).unwrap();
    let feats: Vec<FeatureTensor> = (0..3).map(|s| random_features(&cfg, 10 + s)).collect();
    let refs: Vec<&FeatureTensor> = feats.iter().collect();
    let input = stack_inputs::<f64>(&cfg, &refs).unwrap();
    let train = forward_batch(&p, &input, 3, &[0, 1, 2], BnMode::Batch).unwrap();
    let stats: Vec<(Vec<f64>, Vec<f64>)> = train.batch_stats().into_iter().map(|(m, v)| (m.to_vec(), v.to_vec())).collect();
    for (unit, (mean, var)) in p.layout.units.clone().iter().zip(stats) {
        p.buffers[unit.running_mean.clone()].copy_from_slice(&mean);
        p.buffers[unit.running_var.clone()].copy_from_slice(&var);
    }
    let infer = forward_batch(&p, &input, 3, &[0, 1, 2], BnMode::Running).unwrap();
    for (a, b) in train.outputs.iter().zip(&infer.outputs) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

fn grads_for(p: &CrnnParams<f64>, f: &FeatureTensor, t: &TrainingTarget, scale: f64) -> Vec<f64> {
    let input = stack_inputs::<f64>(&p.config, &[f]).unwrap();
    let pass = forward_batch(p, &input, 1, &[t.view], BnMode::Batch).unwrap();
    let (_, d) = masked_loss(&pass.outputs, &[t]).unwrap();
    let d: Vec<f64> = d.iter().map(|v| v * scale).collect();
    backward(p, &pass, &d).unwrap()
}

#[test]
fn flat_loss_has_zero_gradient() {
    let cfg = small_config(Variant::Crnn);
    let p = CrnnParams::<f64>::init(&cfg, 5).unwrap();
    let f = random_features(&cfg, 3);
    let input = stack_inputs::<f64>(&cfg, &[&f]).unwrap();
    let pass = forward_batch(&p, &input, 1, &[0], BnMode::Batch).unwrap();
    // Outputs that already equal the targets: no mask and C equal to C-hat.
    let frames = cfg.output_frames();
    let t = target(0, &vec![(None, true); frames]);
    let outputs: Vec<f64> = (0..frames).flat_map(|_| [0.3, 1.0]).collect();
    let (l, d) = masked_loss(&outputs, &[&t]).unwrap();
    assert_eq!(l, 0.0);
    assert!(backward(&p, &pass, &d).unwrap().iter().all(|g| *g == 0.0));
}

#[test]
fn doubled_loss_doubles_gradients() {
    let cfg = small_config(Variant::Crnn);
    let p = CrnnParams::<f64>::init(&cfg, 6).unwrap();
    let f = random_features(&cfg, 4);
    let frames: Vec<(Option<f64>, bool)> = (0..cfg.output_frames()).map(|i| if i % 2 == 0 { (Some(0.3), true) } else { (None, false) }).collect();
    let t = target(2, &frames);
    let g1 = grads_for(&p, &f, &t, 1.0);
    let g2 = grads_for(&p, &f, &t, 2.0);
    assert!(g1.iter().any(|g| *g != 0.0));
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn parameter_count_depends_only_on_config() {
    for variant in Variant::ALL {
        let cfg = small_config(variant);
        let a = CrnnParams::<f32>::init(&cfg, 1).unwrap();
        let b = CrnnParams::<f32>::init(&cfg, 2).unwrap();
        assert_eq!(a.n_params(), b.n_params());
        assert_eq!(a.n_params(), Layout::new(&cfg).n_params);
        assert!(a.is_finite());
        assert_ne!(a.values, b.values);
    }
}

fn single_sample(cfg: &CrnnConfig) -> Sample {
    let frames: Vec<(Option<f64>, bool)> = (0..cfg.output_frames()).map(|i| if i < 2 { (Some(0.2 + 0.1 * i as f64), true) } else { (None, false) }).collect();
    Sample { features: random_features(cfg, 7), view: 3, target: target(3, &frames) }
}

#[test]
fn memorizes_one_sample() {
    let cfg = small_config(Variant::Crnn);
    let hyper = TrainConfig { epochs: 400, batch_size: 1, lr: 3e-3, lr_fixed_epochs: 400, ..TrainConfig::default() };
    let out = train(&[single_sample(&cfg)], &cfg, &hyper).unwrap();
    let last = out.history.final_loss().unwrap();
    assert!(last < 1e-3, "final loss {last}");
    assert_eq!(out.history.epochs.iter().map(|e| e.steps).sum::<usize>(), 400);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let cfg = small_config(Variant::Cnn);
    let hyper = TrainConfig { epochs: 3, batch_size: 1, lr: 0.0, seed: 11, ..TrainConfig::default() };
    let out = train(&[single_sample(&cfg)], &cfg, &hyper).unwrap();
    let init = CrnnParams::<f32>::init(&cfg, hyper.seed).unwrap();
    assert_eq!(out.params.values, init.values);
}

#[test]
fn training_is_deterministic() {
    let cfg = small_config(Variant::Crnn);
    let data: Vec<Sample> = (0..4)
        .map(|s| Sample { features: random_features(&cfg, 20 + s), ..single_sample(&cfg) })
        .collect();
    let hyper = TrainConfig { epochs: 3, batch_size: 2, lr: 1e-3, seed: 5, ..TrainConfig::default() };
    let a = train(&data, &cfg, &hyper).unwrap();
    let b = train(&data, &cfg, &hyper).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params.values, b.params.values);
    assert_eq!(a.params.buffers, b.params.buffers);
}

#[test]
fn cnn_f_windows_a_long_chunk() {
    let cfg = small_config(Variant::CnnF);
    let p = CrnnParams::<f32>::init(&cfg, 2).unwrap();
    let long = FeatureTensor::new(FeatureKind::GccPhat, 2, 960, 16, vec![0.1; 2 * 960 * 16], "long").unwrap();
    assert_eq!(predict_chunk(&p, &long, 0).unwrap().len(), 60);
    let frames = vec![(None, false); 60];
    let s = Sample { features: long, view: 0, target: target(0, &frames) };
    let w = prepare_windows(&cfg, &[s]).unwrap();
    assert_eq!(w.len(), 12);
    assert!(w.iter().all(|s| s.features.frames == 80 && s.target.len() == 5));
}

#[test]
fn threshold_extremes() {
    let preds: Vec<Prediction> = (0..10).map(|i| Prediction { x: 0.1 * i as f64, confidence: 0.1 * i as f64 }).collect();
    assert!(predictions_to_track(&preds, 2, 0.0).frames.iter().all(|f| f.active && f.x_norm.is_some()));
    assert!(predictions_to_track(&preds, 2, 1.0 + 1e-9).frames.iter().all(|f| !f.active && f.x_norm.is_none()));
}

#[test]
fn stitching_averages_overlap() {
    let a = vec![Prediction { x: 0.2, confidence: 0.0 }; 4];
    let b = vec![Prediction { x: 0.4, confidence: 1.0 }; 4];
    let s = stitch(&[a, b], 2).unwrap();
    assert_eq!(s.len(), 6);
    assert_eq!(s[0].x, 0.2);
    assert!((s[2].x - 0.3).abs() < 1e-12 && (s[3].confidence - 0.5).abs() < 1e-12);
    assert_eq!(s[5].x, 0.4);
}

#[test]
fn view_conditioning_learns_offset() {
    let cfg = small_config(Variant::Cnn);
    let n = cfg.output_frames();
    let mut data = Vec::new();
    for s in 0..4 {
        let f = random_features(&cfg, 40 + s);
        for (view, x) in [(1usize, 0.4), (6usize, 0.6)] {
            data.push(Sample { features: f.clone(), view, target: target(view, &vec![(Some(x), true); n]) });
        }
    }
    let hyper = TrainConfig { epochs: 150, batch_size: 8, lr: 3e-3, lr_fixed_epochs: 150, seed: 2, ..TrainConfig::default() };
    let out = train(&data, &cfg, &hyper).unwrap();
    let mut diff = 0.0;
    for s in 0..4 {
        let f = random_features(&cfg, 40 + s);
        let a = forward(&out.params, &f, 1).unwrap();
        let b = forward(&out.params, &f, 6).unwrap();
        diff += a.iter().zip(&b).map(|(a, b)| b.x - a.x).sum::<f64>() / n as f64 / 4.0;
    }
    assert!((diff - 0.2).abs() <= 0.2 * 0.2, "mean offset {diff}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn outputs_are_bounded(seed in 0u64..10_000, scale in 0.0f32..1e4, view in 0usize..11) {
        let cfg = small_config(Variant::Crnn);
        let p = CrnnParams::<f32>::init(&cfg, seed).unwrap();
        let mut f = random_features(&cfg, seed);
        f.data.iter_mut().for_each(|v| *v *= scale);
        let preds = forward(&p, &f, view).unwrap();
        prop_assert_eq!(preds.len(), cfg.output_frames());
        for q in preds {
            prop_assert!((0.0..=1.0).contains(&q.x) && (0.0..=1.0).contains(&q.confidence));
        }
    }
}
