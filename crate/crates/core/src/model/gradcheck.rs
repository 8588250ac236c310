//! Central finite-difference checks of every layer's reverse-mode gradient,
//! run in `f64`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng as _;

use super::config::{CrnnConfig, Variant};
use super::layers::{self, BnMode, GruGrads, GruWeights};
use super::network::{backward, forward_batch, masked_loss, CrnnParams};
use super::real::sigmoid;
use crate::error::Result;
use crate::rng::{self, Rng};
use crate::supervision::{TargetFrame, TrainingTarget};

pub const FD_STEP: f64 = 1e-3;
/// Denominator floor of the relative error. Central differences at
/// `FD_STEP` carry an O(h²) truncation error near 1e-7 on unit-scale
/// functions, so gradients smaller than this are compared on an absolute
/// scale.
pub const REL_FLOOR: f64 = 1e-3;
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub layer: &'static str,
    pub checked: usize,
    /// Samples rejected because the perturbation crossed a ReLU kink.
    pub skipped: usize,
    pub max_rel_error: f64,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn gauss(r: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng::standard_normal(r)).collect()
}

/// Compares `analytic[i]` with the central difference of `f` for each index
/// in `picks`. `f` returns `None` when the perturbed point is not
/// comparable, and the index is skipped.
fn compare(
    layer: &'static str,
    theta: &[f64],
    analytic: &[f64],
    picks: &[usize],
    mut f: impl FnMut(&[f64]) -> Option<f64>,
) -> GradCheckReport {
    let mut th = theta.to_vec();
    let mut rep = GradCheckReport { layer, checked: 0, skipped: 0, max_rel_error: 0.0 };
    for &i in picks {
        let orig = th[i];
        th[i] = orig + FD_STEP;
        let up = f(&th);
        th[i] = orig - FD_STEP;
        let down = f(&th);
        th[i] = orig;
        match (up, down) {
            (Some(u), Some(d)) => {
                let numeric = (u - d) / (2.0 * FD_STEP);
                let e = rel_error(analytic[i], numeric);
                rep.max_rel_error = rep.max_rel_error.max(e);
                rep.checked += 1;
            }
            _ => rep.skipped += 1,
        }
    }
    rep
}

/// Indices drawn without replacement from `range`, at most `n`.
fn picks(r: &mut Rng, range: core::ops::Range<usize>, n: usize) -> Vec<usize> {
    let len = range.len();
    sample(r, len, n.min(len)).into_iter().map(|i| range.start + i).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn check_conv(seed: u64) -> GradCheckReport {
    let mut r = rng::stream(seed, 1);
    let (n, cin, cout, h, w) = (2, 3, 4, 6, 5);
    let (nw, nb, nx) = (cout * cin * 9, cout, n * cin * h * w);
    let theta = gauss(&mut r, nw + nb + nx);
    let proj = gauss(&mut r, n * cout * h * w);
    let f = |t: &[f64]| {
        let mut out = vec![0.0; n * cout * h * w];
        layers::conv3x3_forward(&t[nw + nb..], n, cin, cout, h, w, &t[..nw], &t[nw..nw + nb], &mut out);
        Some(dot(&out, &proj))
    };
    let mut g = vec![0.0; theta.len()];
    {
        let (gw, rest) = g.split_at_mut(nw);
        let (gb, gx) = rest.split_at_mut(nb);
        layers::conv3x3_backward(&theta[nw + nb..], &proj, n, cin, cout, h, w, &theta[..nw], gw, gb, Some(gx));
    }
    let mut idx = picks(&mut r, 0..nw + nb, MIN_SAMPLES);
    idx.extend(picks(&mut r, nw + nb..theta.len(), 50));
    compare("conv3x3", &theta, &g, &idx, f)
}

pub fn check_batchnorm(seed: u64, mode: BnMode) -> GradCheckReport {
    let mut r = rng::stream(seed, 2);
    let (n, c, hw) = (3, 50, 4);
    let nx = n * c * hw;
    let mut theta = gauss(&mut r, 2 * c + nx);
    for v in &mut theta[2 * c..] {
        *v = 0.5 + 2.0 * *v;
    }
    let rm = gauss(&mut r, c);
    let rv: Vec<f64> = (0..c).map(|_| r.random_range(0.5..2.0)).collect();
    let proj = gauss(&mut r, nx);
    let eps = 1e-5;
    let f = |t: &[f64]| {
        let mut y = vec![0.0; nx];
        layers::batchnorm_forward(&t[2 * c..], n, c, hw, &t[..c], &t[c..2 * c], &rm, &rv, eps, mode, &mut y);
        Some(dot(&y, &proj))
    };
    let mut y = vec![0.0; nx];
    let cache = layers::batchnorm_forward(&theta[2 * c..], n, c, hw, &theta[..c], &theta[c..2 * c], &rm, &rv, eps, mode, &mut y);
    let mut g = vec![0.0; theta.len()];
    {
        let (gg, rest) = g.split_at_mut(c);
        let (gb, gx) = rest.split_at_mut(c);
        layers::batchnorm_backward(&proj, &cache, n, c, hw, &theta[..c], gg, gb, gx);
    }
    let mut idx: Vec<usize> = (0..2 * c).collect();
    idx.extend(picks(&mut r, 2 * c..theta.len(), MIN_SAMPLES));
    let name = match mode {
        BnMode::Batch => "batch-norm (batch statistics)",
        BnMode::Running => "batch-norm (running statistics)",
    };
    compare(name, &theta, &g, &idx, f)
}

pub fn check_relu(seed: u64) -> GradCheckReport {
    let mut r = rng::stream(seed, 3);
    // Inputs are kept away from the kink, where no derivative exists.
    let theta: Vec<f64> = (0..200)
        .map(|_| {
            let m: f64 = r.random_range(0.05..2.0);
            if r.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    let proj = gauss(&mut r, theta.len());
    let f = |t: &[f64]| {
        let mut y = t.to_vec();
        layers::relu_inplace(&mut y);
        Some(dot(&y, &proj))
    };
    let mut y = theta.clone();
    layers::relu_inplace(&mut y);
    let mut g = proj.clone();
    layers::relu_backward_inplace(&y, &mut g);
    let idx = picks(&mut r, 0..theta.len(), MIN_SAMPLES);
    compare("relu", &theta, &g, &idx, f)
}

pub fn check_avgpool(seed: u64) -> GradCheckReport {
    let mut r = rng::stream(seed, 4);
    let (planes, h, w) = (4, 8, 6);
    let theta = gauss(&mut r, planes * h * w);
    let proj = gauss(&mut r, planes * h * w / 4);
    let f = |t: &[f64]| {
        let mut y = vec![0.0; planes * h * w / 4];
        layers::avgpool2_forward(t, planes, h, w, &mut y);
        Some(dot(&y, &proj))
    };
    let mut g = vec![0.0; theta.len()];
    layers::avgpool2_backward(&proj, planes, h, w, &mut g);
    let idx = picks(&mut r, 0..theta.len(), MIN_SAMPLES);
    compare("average pool", &theta, &g, &idx, f)
}

pub fn check_linear(seed: u64) -> GradCheckReport {
    let mut r = rng::stream(seed, 5);
    let (rows, din, dout) = (7, 12, 8);
    let (nw, nb, nx) = (dout * din, dout, rows * din);
    let theta = gauss(&mut r, nw + nb + nx);
    let proj = gauss(&mut r, rows * dout);
    let f = |t: &[f64]| {
        let mut y = vec![0.0; rows * dout];
        layers::linear_forward(&t[nw + nb..], rows, din, dout, &t[..nw], &t[nw..nw + nb], &mut y);
        Some(dot(&y, &proj))
    };
    let mut g = vec![0.0; theta.len()];
    {
        let (gw, rest) = g.split_at_mut(nw);
        let (gb, gx) = rest.split_at_mut(nb);
        layers::linear_backward(&theta[nw + nb..], &proj, rows, din, dout, &theta[..nw], gw, gb, Some(gx));
    }
    let mut idx = picks(&mut r, 0..nw + nb, MIN_SAMPLES);
    idx.extend(picks(&mut r, nw + nb..theta.len(), 50));
    compare("fully connected", &theta, &g, &idx, f)
}

pub fn check_gru(seed: u64, reverse: bool) -> GradCheckReport {
    let mut r = rng::stream(seed, 6 + reverse as u64);
    let (steps, input, hidden) = (6, 3, 4);
    let sizes = [3 * hidden * input, 3 * hidden * hidden, 3 * hidden, 3 * hidden, steps * input];
    let off: Vec<usize> = sizes.iter().scan(0, |acc, &s| {
        let o = *acc;
        *acc += s;
        Some(o)
    }).collect();
    let total: usize = sizes.iter().sum();
    let theta: Vec<f64> = gauss(&mut r, total).into_iter().map(|v| 0.5 * v).collect();
    let proj = gauss(&mut r, steps * hidden);
    let weights = |t: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            t[off[0]..off[1]].to_vec(),
            t[off[1]..off[2]].to_vec(),
            t[off[2]..off[3]].to_vec(),
            t[off[3]..off[4]].to_vec(),
        )
    };
    let f = |t: &[f64]| {
        let (a, b, c, d) = weights(t);
        let p = GruWeights { w_ih: &a, w_hh: &b, b_ih: &c, b_hh: &d, input, hidden };
        let mut out = vec![0.0; steps * hidden];
        layers::gru_forward(&t[off[4]..], steps, p, reverse, &mut out, hidden, 0);
        Some(dot(&out, &proj))
    };
    let (a, b, c, d) = weights(&theta);
    let p = GruWeights { w_ih: &a, w_hh: &b, b_ih: &c, b_hh: &d, input, hidden };
    let mut out = vec![0.0; steps * hidden];
    let x = &theta[off[4]..];
    let cache = layers::gru_forward(x, steps, p, reverse, &mut out, hidden, 0);
    let mut g = vec![0.0; total];
    {
        let (gw_ih, rest) = g.split_at_mut(sizes[0]);
        let (gw_hh, rest) = rest.split_at_mut(sizes[1]);
        let (gb_ih, rest) = rest.split_at_mut(sizes[2]);
        let (gb_hh, gx) = rest.split_at_mut(sizes[3]);
        let grads = GruGrads { w_ih: gw_ih, w_hh: gw_hh, b_ih: gb_ih, b_hh: gb_hh };
        layers::gru_backward(x, steps, p, &cache, &proj, hidden, 0, grads, Some(gx));
    }
    let mut idx = picks(&mut r, 0..off[4], MIN_SAMPLES);
    idx.extend(picks(&mut r, off[4]..total, 18));
    compare(if reverse { "GRU gates (reverse)" } else { "GRU gates (forward)" }, &theta, &g, &idx, f)
}

pub fn check_sigmoid(seed: u64) -> GradCheckReport {
    let mut r = rng::stream(seed, 8);
    let theta: Vec<f64> = gauss(&mut r, 150).into_iter().map(|v| 3.0 * v).collect();
    let proj = gauss(&mut r, theta.len());
    let f = |t: &[f64]| Some(t.iter().zip(&proj).map(|(&z, &p)| p * sigmoid(z)).sum());
    let g: Vec<f64> = theta
        .iter()
        .zip(&proj)
        .map(|(&z, &p)| {
            let s = sigmoid(z);
            p * s * (1.0 - s)
        })
        .collect();
    let idx = picks(&mut r, 0..theta.len(), MIN_SAMPLES);
    compare("sigmoid", &theta, &g, &idx, f)
}

fn random_targets(r: &mut Rng, batch: usize, frames: usize) -> Vec<TrainingTarget> {
    (0..batch)
        .map(|_| TrainingTarget {
            view: 0,
            frames: (0..frames)
                .map(|_| {
                    let mask = r.random::<f64>() < 0.6;
                    TargetFrame { x_hat: mask.then(|| r.random_range(0.0..1.0)), c_hat: r.random::<bool>(), mask }
                })
                .collect(),
        })
        .collect()
}

pub fn check_masked_loss(seed: u64) -> GradCheckReport {
    let mut r = rng::stream(seed, 9);
    let (batch, frames) = (2, 60);
    let theta: Vec<f64> = (0..batch * frames * 2).map(|_| r.random_range(0.02..0.98)).collect();
    let targets = random_targets(&mut r, batch, frames);
    let refs: Vec<&TrainingTarget> = targets.iter().collect();
    let (_, g) = masked_loss(&theta, &refs).expect("shapes agree");
    let f = |t: &[f64]| Some(masked_loss(t, &refs).expect("shapes agree").0);
    let idx = picks(&mut r, 0..theta.len(), MIN_SAMPLES);
    compare("masked loss", &theta, &g, &idx, f)
}

/// Tiny CRNN used by the whole-network check.
pub fn tiny_config() -> CrnnConfig {
    CrnnConfig {
        conv_channels: [2, 2, 2, 2],
        gru_hidden: 3,
        fc1_dim: 4,
        in_channels: 2,
        input_frames: 32,
        bins: 16,
        ..CrnnConfig::desk(Variant::Crnn, 2)
    }
}

/// End-to-end check through conv, batch norm, pooling, GRU, FC and loss.
/// Parameters whose perturbation flips a ReLU are resampled.
pub fn check_network(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_config();
    let mut params = CrnnParams::<f64>::init(&cfg, seed)?;
    let mut r = rng::stream(seed, 10);
    for v in params.values.iter_mut() {
        if *v == 0.0 {
            let z = rng::standard_normal(&mut r);
            *v = 0.1 * z;
        }
    }
    let batch = 2;
    let input = gauss(&mut r, batch * cfg.in_channels * cfg.input_frames * cfg.bins);
    let views = [3usize, 7];
    let targets = random_targets(&mut r, batch, cfg.output_frames());
    let refs: Vec<&TrainingTarget> = targets.iter().collect();
    let pass = forward_batch(&params, &input, batch, &views, BnMode::Batch)?;
    let pattern = pass.relu_pattern();
    let (_, d) = masked_loss(&pass.outputs, &refs)?;
    let g = backward(&params, &pass, &d)?;
    drop(pass);
    let theta = params.values.clone();
    let mut order = picks(&mut r, 0..theta.len(), theta.len());
    let mut probe = params.clone();
    let mut f = |t: &[f64]| {
        probe.values.copy_from_slice(t);
        let pass = forward_batch(&probe, &input, batch, &views, BnMode::Batch).ok()?;
        if pass.relu_pattern() != pattern {
            return None;
        }
        Some(masked_loss(&pass.outputs, &refs).ok()?.0)
    };
    let mut rep = GradCheckReport { layer: "full network", checked: 0, skipped: 0, max_rel_error: 0.0 };
    while rep.checked < MIN_SAMPLES {
        let Some(i) = order.pop() else { break };
        let one = compare("full network", &theta, &g, &[i], &mut f);
        rep.checked += one.checked;
        rep.skipped += one.skipped;
        rep.max_rel_error = rep.max_rel_error.max(one.max_rel_error);
    }
    params.values = theta;
    Ok(rep)
}

pub fn check_all(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut out = vec![
        check_conv(seed),
        check_batchnorm(seed, BnMode::Batch),
        check_batchnorm(seed, BnMode::Running),
        check_relu(seed),
        check_avgpool(seed),
        check_gru(seed, false),
        check_gru(seed, true),
        check_linear(seed),
        check_sigmoid(seed),
        check_masked_loss(seed),
    ];
    out.push(check_network(seed)?);
    Ok(out)
}
