use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::config::CrnnConfig;
use super::layers::BnMode;
use super::network::{backward, forward_batch, masked_loss, stack_inputs, CrnnParams};
use super::real::Real;
use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::rng;
use crate::supervision::TrainingTarget;

/// One training example: a normalized feature tensor, the camera view it is
/// conditioned on and its fused target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureTensor,
    pub view: usize,
    pub target: TrainingTarget,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs run at the base rate before decay starts.
    pub lr_fixed_epochs: usize,
    /// Per-epoch multiplicative decay afterwards.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 50, batch_size: 32, lr: 1e-4, lr_fixed_epochs: 30, lr_decay: 0.9, beta1: 0.9, beta2: 0.999, adam_eps: 1e-8, seed: 0 }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.lr_fixed_epochs {
            self.lr
        } else {
            self.lr * libm::pow(self.lr_decay, (epoch + 1 - self.lr_fixed_epochs) as f64)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.lr_decay > 0.0) {
            return Err(Error::config(format!("invalid learning rate {} / decay {}", self.lr, self.lr_decay)));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0) {
            return Err(Error::config("Adam coefficients out of range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn update(&mut self, values: &mut [f32], grads: &[f32], lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = (1.0 - libm::pow(cfg.beta1, self.step as f64)) as f32;
        let c2 = (1.0 - libm::pow(cfg.beta2, self.step as f64)) as f32;
        let (lr, eps) = (lr as f32, cfg.adam_eps as f32);
        for (((p, &g), m), v) in values.iter_mut().zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (libm::sqrtf(vh) + eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: CrnnParams<f32>,
    pub history: TrainHistory,
    pub optimizer: AdamState,
}

/// Splits samples longer than the model input into consecutive windows
/// (a 960-frame chunk becomes twelve 80-frame windows for CNN-F).
pub fn prepare_windows(config: &CrnnConfig, samples: &[Sample]) -> Result<Vec<Sample>> {
    let len = config.input_frames;
    let out_len = config.output_frames();
    let mut out = Vec::new();
    for s in samples {
        let f = s.features.frames;
        if f == len {
            out.push(s.clone());
            continue;
        }
        if f % len != 0 || s.target.len() * len != f * out_len {
            return Err(Error::size(format!("sample '{}' with {f} frames cannot be windowed to {len}", s.features.id)));
        }
        for k in 0..f / len {
            out.push(Sample {
                features: s.features.frame_window(k * len, len)?,
                view: s.view,
                target: s.target.window(k * out_len, out_len),
            });
        }
    }
    Ok(out)
}

/// Folds one batch's statistics into the running batch-norm buffers.
pub fn update_running_stats<T: Real>(params: &mut CrnnParams<T>, stats: &[(Vec<T>, Vec<T>)], counts: &[usize]) {
    let mom = T::of(params.config.bn_momentum);
    let keep = T::one() - mom;
    for ((unit, (mean, var)), &n) in params.layout.units.iter().zip(stats).zip(counts) {
        let unbias = if n > 1 { T::of(n as f64 / (n - 1) as f64) } else { T::one() };
        for (r, &m) in params.buffers[unit.running_mean.clone()].iter_mut().zip(mean) {
            *r = keep * *r + mom * m;
        }
        for (r, &v) in params.buffers[unit.running_var.clone()].iter_mut().zip(var) {
            *r = keep * *r + mom * v * unbias;
        }
    }
}

/// One optimizer step on a batch; returns the batch loss.
pub fn train_step(params: &mut CrnnParams<f32>, adam: &mut AdamState, batch: &[&Sample], lr: f64, cfg: &TrainConfig) -> Result<f64> {
    let feats: Vec<&FeatureTensor> = batch.iter().map(|s| &s.features).collect();
    let views: Vec<usize> = batch.iter().map(|s| s.view).collect();
    let targets: Vec<&TrainingTarget> = batch.iter().map(|s| &s.target).collect();
    let input = stack_inputs::<f32>(&params.config, &feats)?;
    let pass = forward_batch(params, &input, batch.len(), &views, BnMode::Batch)?;
    drop(input);
    let (loss, d) = masked_loss(&pass.outputs, &targets)?;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("non-finite loss {loss}")));
    }
    let grads = backward(params, &pass, &d)?;
    let stats: Vec<(Vec<f32>, Vec<f32>)> = pass.batch_stats().into_iter().map(|(m, v)| (m.to_vec(), v.to_vec())).collect();
    let counts = pass.bn_counts(&params.config);
    drop(pass);
    adam.update(&mut params.values, &grads, lr, cfg);
    update_running_stats(params, &stats, &counts);
    if !params.is_finite() {
        return Err(Error::Divergence("parameters became non-finite after an update".into()));
    }
    Ok(loss)
}

pub fn train(dataset: &[Sample], config: &CrnnConfig, hyper: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, hyper, |_| {})
}

/// Deterministic mini-batch training. The shuffle of each epoch is drawn
/// from its own stream of `hyper.seed`; batches are reduced in a fixed order.
pub fn train_with(dataset: &[Sample], config: &CrnnConfig, hyper: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    hyper.validate()?;
    if dataset.is_empty() {
        return Err(Error::Precondition("training set is empty".into()));
    }
    let samples = prepare_windows(config, dataset)?;
    let mut params = CrnnParams::<f32>::init(config, hyper.seed)?;
    let mut adam = AdamState::new(params.n_params());
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..hyper.epochs {
        let lr = hyper.lr_at(epoch);
        let mut r = rng::stream(rng::mix(hyper.seed, epoch as u64), 0x5e1f);
        order.shuffle(&mut r);
        let mut total = 0.0;
        let mut steps = 0;
        for idx in order.chunks(hyper.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &samples[i]).collect();
            let loss = train_step(&mut params, &mut adam, &batch, lr, hyper)
                .map_err(|e| match e {
                    Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}, step {steps}: {msg}")),
                    other => other,
                })?;
            total += loss * batch.len() as f64;
            steps += 1;
        }
        let rec = EpochRecord { epoch, lr, train_loss: total / samples.len() as f64, steps };
        on_epoch(&rec);
        history.epochs.push(rec);
    }
    Ok(TrainOutcome { params, history, optimizer: adam })
}
