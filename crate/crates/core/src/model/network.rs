use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::config::{CrnnConfig, Layout};
use super::layers::{self, BnCache, BnMode, GruCache, GruGrads, GruWeights};
use super::real::{sigmoid, Real};
use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::rng;
use crate::supervision::TrainingTarget;

/// Network output for one frame, both values squashed into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    /// Horizontal position normalized by the image width.
    pub x: f64,
    pub confidence: f64,
}

/// All trainable tensors in one flat array plus the batch-norm running
/// statistics, addressed through [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrnnParams<T: Real = f32> {
    pub config: CrnnConfig,
    pub layout: Layout,
    pub values: Vec<T>,
    pub buffers: Vec<T>,
}

impl<T: Real> CrnnParams<T> {
    /// Kaiming-uniform conv/FC weights, orthogonal GRU recurrent blocks,
    /// `U(±1/√H)` GRU input weights, zero biases, unit batch-norm scale.
    pub fn init(config: &CrnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut values = vec![T::zero(); layout.n_params];
        let mut buffers = vec![T::zero(); layout.n_buffers];
        let mut r = rng::stream(seed, 0x1a17);
        let uniform = |dst: &mut [T], bound: f64, r: &mut rng::Rng| {
            for v in dst {
                *v = T::of(r.random_range(-bound..bound));
            }
        };
        for u in &layout.units {
            let fan_in = (u.cin * 9) as f64;
            uniform(&mut values[u.weight.clone()], libm::sqrt(6.0 / fan_in), &mut r);
            values[u.gamma.clone()].fill(T::one());
            buffers[u.running_var.clone()].fill(T::one());
        }
        for layer in &layout.gru {
            for d in layer {
                let h = d.hidden;
                uniform(&mut values[d.w_ih.clone()], 1.0 / libm::sqrt(h as f64), &mut r);
                for gate in 0..3 {
                    let q = orthogonal(h, &mut r);
                    let block = &mut values[d.w_hh.start + gate * h * h..][..h * h];
                    for (dst, &v) in block.iter_mut().zip(&q) {
                        *dst = T::of(v);
                    }
                }
            }
        }
        let head = config.head_input() as f64;
        uniform(&mut values[layout.fc1_weight.clone()], libm::sqrt(6.0 / head), &mut r);
        let fc2_in = (config.fc1_dim + config.n_views) as f64;
        uniform(&mut values[layout.fc2_weight.clone()], libm::sqrt(6.0 / fc2_in), &mut r);
        Ok(Self { config: config.clone(), layout, values, buffers })
    }

    pub fn n_params(&self) -> usize {
        self.values.len()
    }

    pub fn cast<U: Real>(&self) -> CrnnParams<U> {
        CrnnParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
            buffers: self.buffers.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().chain(&self.buffers).all(|v| v.is_finite())
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        let t = self.layout.find(name)?;
        Some(if t.buffer { &self.buffers[t.range()] } else { &self.values[t.range()] })
    }
}

/// Rows of a Gram-Schmidt orthonormalized Gaussian matrix.
fn orthogonal(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    loop {
        let mut m: Vec<f64> = (0..n * n).map(|_| rng::standard_normal(r)).collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let d: f64 = (0..n).map(|k| m[i * n + k] * m[j * n + k]).sum();
                for k in 0..n {
                    m[i * n + k] -= d * m[j * n + k];
                }
            }
            let norm = libm::sqrt((0..n).map(|k| m[i * n + k] * m[i * n + k]).sum::<f64>());
            if norm < 1e-6 {
                ok = false;
                break;
            }
            for k in 0..n {
                m[i * n + k] /= norm;
            }
        }
        if ok {
            return m;
        }
    }
}

struct UnitTape<T> {
    bn: BnCache<T>,
    /// Post-ReLU activation.
    y: Vec<T>,
}

struct GruTape<T> {
    /// Layer input per sample, `[steps, input]`.
    input: Vec<Vec<T>>,
    /// Layer output per sample, `[steps, 2H]`.
    output: Vec<Vec<T>>,
    dirs: Vec<[GruCache<T>; 2]>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardPass<T> {
    pub batch: usize,
    pub mode: BnMode,
    /// `[batch, out_frames, 2]` after the sigmoid: `(x, C)` per frame.
    pub outputs: Vec<T>,
    /// Shape `(channels, frames, bins)` of the trunk output before
    /// frequency pooling.
    pub trunk_shape: (usize, usize, usize),
    input: Vec<T>,
    units: Vec<UnitTape<T>>,
    pooled: Vec<Vec<T>>,
    gru: Vec<GruTape<T>>,
    head_in: Vec<T>,
    h1: Vec<T>,
    cat: Vec<T>,
}

impl<T: Real> ForwardPass<T> {
    /// Batch mean and population variance of every conv unit, used to update
    /// the running statistics.
    pub fn batch_stats(&self) -> Vec<(&[T], &[T])> {
        self.units.iter().map(|u| (&u.bn.mean[..], &u.bn.var[..])).collect()
    }

    /// Element count each batch-norm statistic was computed over.
    pub fn bn_counts(&self, cfg: &CrnnConfig) -> Vec<usize> {
        let mut out = Vec::new();
        let (mut t, mut f) = (cfg.input_frames, cfg.bins);
        for _ in 0..4 {
            out.push(self.batch * t * f);
            out.push(self.batch * t * f);
            t /= 2;
            f /= 2;
        }
        out
    }

    /// Sign pattern of every ReLU in the pass.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.units.iter().flat_map(|u| u.y.iter()).chain(&self.h1).map(|v| *v > T::zero()).collect()
    }

    pub fn predictions(&self, sample: usize) -> Vec<Prediction> {
        let frames = self.outputs.len() / (2 * self.batch);
        (0..frames)
            .map(|i| {
                let k = (sample * frames + i) * 2;
                Prediction { x: self.outputs[k].f64(), confidence: self.outputs[k + 1].f64() }
            })
            .collect()
    }
}

/// Forward pass over a batch `[batch, in_channels, input_frames, bins]`.
pub fn forward_batch<T: Real>(params: &CrnnParams<T>, input: &[T], batch: usize, views: &[usize], mode: BnMode) -> Result<ForwardPass<T>> {
    let cfg = &params.config;
    let per = cfg.in_channels * cfg.input_frames * cfg.bins;
    if batch == 0 || input.len() != batch * per || views.len() != batch {
        return Err(Error::size(format!(
            "batch of {batch}: expected {} input values and {batch} views, got {} and {}",
            batch * per,
            input.len(),
            views.len()
        )));
    }
    if let Some(&v) = views.iter().find(|&&v| v >= cfg.n_views) {
        return Err(Error::Domain { what: "view index", value: v as f64 });
    }
    let lay = &params.layout;
    let p = &params.values;
    let eps = T::of(cfg.bn_eps);
    let (mut h, mut w) = (cfg.input_frames, cfg.bins);
    let mut units = Vec::with_capacity(8);
    let mut pooled: Vec<Vec<T>> = Vec::with_capacity(4);
    for block in 0..4 {
        for u in 0..2 {
            let unit = &lay.units[block * 2 + u];
            let x: &[T] = if u == 1 {
                &units.last().map(|t: &UnitTape<T>| &t.y).unwrap()[..]
            } else if block == 0 {
                input
            } else {
                &pooled[block - 1]
            };
            let hw = h * w;
            let mut conv = vec![T::zero(); batch * unit.cout * hw];
            layers::conv3x3_forward(x, batch, unit.cin, unit.cout, h, w, &p[unit.weight.clone()], &p[unit.bias.clone()], &mut conv);
            let mut y = vec![T::zero(); batch * unit.cout * hw];
            let bn = layers::batchnorm_forward(
                &conv,
                batch,
                unit.cout,
                hw,
                &p[unit.gamma.clone()],
                &p[unit.beta.clone()],
                &params.buffers[unit.running_mean.clone()],
                &params.buffers[unit.running_var.clone()],
                eps,
                mode,
                &mut y,
            );
            drop(conv);
            layers::relu_inplace(&mut y);
            units.push(UnitTape { bn, y });
        }
        let c = cfg.conv_channels[block];
        let mut out = vec![T::zero(); batch * c * (h / 2) * (w / 2)];
        layers::avgpool2_forward(&units.last().unwrap().y, batch * c, h, w, &mut out);
        pooled.push(out);
        h /= 2;
        w /= 2;
    }
    let c4 = cfg.conv_channels[3];
    let steps = h;
    let trunk_shape = (c4, h, w);
    // Frequency mean, transposed to [batch, steps, c4].
    let top = &pooled[3];
    let mut seq = vec![T::zero(); batch * steps * c4];
    let inv_w = T::one() / T::of(w as f64);
    for b in 0..batch {
        for c in 0..c4 {
            for t in 0..steps {
                let s: T = top[((b * c4 + c) * steps + t) * w..][..w].iter().copied().sum();
                seq[(b * steps + t) * c4 + c] = s * inv_w;
            }
        }
    }

    let mut gru = Vec::new();
    let mut head_in = seq;
    let mut width = c4;
    for dirs in &lay.gru {
        let hid = dirs[0].hidden;
        let mut tape = GruTape { input: Vec::new(), output: Vec::new(), dirs: Vec::new() };
        let mut next = vec![T::zero(); batch * steps * 2 * hid];
        for b in 0..batch {
            let x = head_in[b * steps * width..(b + 1) * steps * width].to_vec();
            let out = &mut next[b * steps * 2 * hid..(b + 1) * steps * 2 * hid];
            let f = layers::gru_forward(&x, steps, gru_weights(p, &dirs[0]), false, out, 2 * hid, 0);
            let r = layers::gru_forward(&x, steps, gru_weights(p, &dirs[1]), true, out, 2 * hid, hid);
            tape.output.push(out.to_vec());
            tape.input.push(x);
            tape.dirs.push([f, r]);
        }
        gru.push(tape);
        head_in = next;
        width = 2 * hid;
    }

    let rows = batch * steps;
    let fc1 = cfg.fc1_dim;
    let mut h1 = vec![T::zero(); rows * fc1];
    layers::linear_forward(&head_in, rows, width, fc1, &p[lay.fc1_weight.clone()], &p[lay.fc1_bias.clone()], &mut h1);
    layers::relu_inplace(&mut h1);
    let cw = fc1 + cfg.n_views;
    let mut cat = vec![T::zero(); rows * cw];
    for b in 0..batch {
        for t in 0..steps {
            let r = b * steps + t;
            cat[r * cw..r * cw + fc1].copy_from_slice(&h1[r * fc1..(r + 1) * fc1]);
            cat[r * cw + fc1 + views[b]] = T::one();
        }
    }
    let mut outputs = vec![T::zero(); rows * 2];
    layers::linear_forward(&cat, rows, cw, 2, &p[lay.fc2_weight.clone()], &p[lay.fc2_bias.clone()], &mut outputs);
    for v in outputs.iter_mut() {
        *v = sigmoid(*v);
    }
    Ok(ForwardPass {
        batch,
        mode,
        outputs,
        trunk_shape,
        input: input.to_vec(),
        units,
        pooled,
        gru,
        head_in,
        h1,
        cat,
    })
}

fn gru_weights<'a, T>(p: &'a [T], d: &super::config::GruDir) -> GruWeights<'a, T> {
    GruWeights {
        w_ih: &p[d.w_ih.clone()],
        w_hh: &p[d.w_hh.clone()],
        b_ih: &p[d.b_ih.clone()],
        b_hh: &p[d.b_hh.clone()],
        input: d.input,
        hidden: d.hidden,
    }
}

/// Split-borrows the gradients of one GRU direction.
fn gru_grads<'a, T>(g: &'a mut [T], d: &super::config::GruDir) -> GruGrads<'a, T> {
    // Tensors were laid out contiguously in the order w_ih, w_hh, b_ih, b_hh.
    let s = &mut g[d.w_ih.start..d.b_hh.end];
    let (w_ih, rest) = s.split_at_mut(d.w_ih.len());
    let (w_hh, rest) = rest.split_at_mut(d.w_hh.len());
    let (b_ih, b_hh) = rest.split_at_mut(d.b_ih.len());
    GruGrads { w_ih, w_hh, b_ih, b_hh }
}

/// Gradient of the loss w.r.t. every parameter, given the gradient w.r.t.
/// the squashed outputs `[batch, frames, 2]`.
pub fn backward<T: Real>(params: &CrnnParams<T>, pass: &ForwardPass<T>, d_outputs: &[T]) -> Result<Vec<T>> {
    if d_outputs.len() != pass.outputs.len() {
        return Err(Error::size(format!("{} output gradients for {} outputs", d_outputs.len(), pass.outputs.len())));
    }
    let cfg = &params.config;
    let lay = &params.layout;
    let p = &params.values;
    let mut g = vec![T::zero(); p.len()];
    let batch = pass.batch;
    let (c4, steps, wtop) = pass.trunk_shape;
    let rows = batch * steps;
    let fc1 = cfg.fc1_dim;
    let cw = fc1 + cfg.n_views;

    let dz: Vec<T> = d_outputs.iter().zip(&pass.outputs).map(|(&d, &s)| d * s * (T::one() - s)).collect();
    let mut dcat = vec![T::zero(); rows * cw];
    {
        let (gw, gb) = split2(&mut g, lay.fc2_weight.clone(), lay.fc2_bias.clone());
        layers::linear_backward(&pass.cat, &dz, rows, cw, 2, &p[lay.fc2_weight.clone()], gw, gb, Some(&mut dcat));
    }
    let mut dh1 = vec![T::zero(); rows * fc1];
    for r in 0..rows {
        dh1[r * fc1..(r + 1) * fc1].copy_from_slice(&dcat[r * cw..r * cw + fc1]);
    }
    layers::relu_backward_inplace(&pass.h1, &mut dh1);
    let width = cfg.head_input();
    let mut dhead = vec![T::zero(); rows * width];
    {
        let (gw, gb) = split2(&mut g, lay.fc1_weight.clone(), lay.fc1_bias.clone());
        layers::linear_backward(&pass.head_in, &dh1, rows, width, fc1, &p[lay.fc1_weight.clone()], gw, gb, Some(&mut dhead));
    }

    for (li, dirs) in lay.gru.iter().enumerate().rev() {
        let tape = &pass.gru[li];
        let hid = dirs[0].hidden;
        let din = dirs[0].input;
        let mut dprev = vec![T::zero(); batch * steps * din];
        for b in 0..batch {
            let dout = &dhead[b * steps * 2 * hid..(b + 1) * steps * 2 * hid];
            let dx = &mut dprev[b * steps * din..(b + 1) * steps * din];
            for (k, col) in [0, hid].into_iter().enumerate() {
                layers::gru_backward(
                    &tape.input[b],
                    steps,
                    gru_weights(p, &dirs[k]),
                    &tape.dirs[b][k],
                    dout,
                    2 * hid,
                    col,
                    gru_grads(&mut g, &dirs[k]),
                    Some(&mut *dx),
                );
            }
        }
        dhead = dprev;
    }
    let dseq = dhead;

    let mut dtop = vec![T::zero(); batch * c4 * steps * wtop];
    let inv_w = T::one() / T::of(wtop as f64);
    for b in 0..batch {
        for c in 0..c4 {
            for t in 0..steps {
                let d = dseq[(b * steps + t) * c4 + c] * inv_w;
                dtop[((b * c4 + c) * steps + t) * wtop..][..wtop].fill(d);
            }
        }
    }

    let mut dcur = dtop;
    let (mut h, mut w) = (cfg.input_frames >> 3, cfg.bins >> 3);
    for block in (0..4).rev() {
        let c = cfg.conv_channels[block];
        let mut dy = vec![T::zero(); batch * c * h * w];
        layers::avgpool2_backward(&dcur, batch * c, h, w, &mut dy);
        for u in (0..2).rev() {
            let idx = block * 2 + u;
            let unit = &lay.units[idx];
            let tape = &pass.units[idx];
            let hw = h * w;
            layers::relu_backward_inplace(&tape.y, &mut dy);
            let mut dconv = vec![T::zero(); batch * unit.cout * hw];
            {
                let (gg, gb) = split2(&mut g, unit.gamma.clone(), unit.beta.clone());
                layers::batchnorm_backward(&dy, &tape.bn, batch, unit.cout, hw, &p[unit.gamma.clone()], gg, gb, &mut dconv);
            }
            let x: &[T] = if u == 1 {
                &pass.units[idx - 1].y
            } else if block == 0 {
                &pass.input
            } else {
                &pass.pooled[block - 1]
            };
            let first = block == 0 && u == 0;
            let mut dx = if first { Vec::new() } else { vec![T::zero(); batch * unit.cin * hw] };
            {
                let (gw, gb) = split2(&mut g, unit.weight.clone(), unit.bias.clone());
                layers::conv3x3_backward(
                    x,
                    &dconv,
                    batch,
                    unit.cin,
                    unit.cout,
                    h,
                    w,
                    &p[unit.weight.clone()],
                    gw,
                    gb,
                    if first { None } else { Some(&mut dx) },
                );
            }
            dy = dx;
        }
        dcur = dy;
        h *= 2;
        w *= 2;
    }
    Ok(g)
}

fn split2<T>(g: &mut [T], a: core::ops::Range<usize>, b: core::ops::Range<usize>) -> (&mut [T], &mut [T]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.len()])
}

/// Squared-error loss of one sequence: regression gated by the mask,
/// confidence on every frame.
pub fn loss(pred: &[Prediction], target: &TrainingTarget) -> Result<f64> {
    if pred.len() != target.frames.len() {
        return Err(Error::size(format!("{} predictions for {} target frames", pred.len(), target.frames.len())));
    }
    Ok(pred
        .iter()
        .zip(&target.frames)
        .map(|(p, t)| {
            let c = if t.c_hat { 1.0 } else { 0.0 };
            let reg = match (t.mask, t.x_hat) {
                (true, Some(x)) => (p.x - x) * (p.x - x),
                _ => 0.0,
            };
            reg + (p.confidence - c) * (p.confidence - c)
        })
        .sum())
}

/// Batch loss (mean over samples of the per-sequence sum) and its gradient
/// w.r.t. the squashed outputs.
pub fn masked_loss<T: Real>(outputs: &[T], targets: &[&TrainingTarget]) -> Result<(f64, Vec<T>)> {
    let batch = targets.len();
    if batch == 0 || outputs.len() % (2 * batch) != 0 {
        return Err(Error::size("loss needs a non-empty, evenly shaped batch"));
    }
    let frames = outputs.len() / (2 * batch);
    let scale = 1.0 / batch as f64;
    let mut total = 0.0;
    let mut d = vec![T::zero(); outputs.len()];
    for (b, t) in targets.iter().enumerate() {
        if t.frames.len() != frames {
            return Err(Error::size(format!("target has {} frames, network emits {frames}", t.frames.len())));
        }
        for (i, f) in t.frames.iter().enumerate() {
            let k = (b * frames + i) * 2;
            let (x, c) = (outputs[k].f64(), outputs[k + 1].f64());
            if let (true, Some(xh)) = (f.mask, f.x_hat) {
                total += (x - xh) * (x - xh);
                d[k] = T::of(2.0 * (x - xh) * scale);
            }
            let ch = if f.c_hat { 1.0 } else { 0.0 };
            total += (c - ch) * (c - ch);
            d[k + 1] = T::of(2.0 * (c - ch) * scale);
        }
    }
    Ok((total * scale, d))
}

/// Copies feature tensors into one batch buffer, checking the layout.
pub fn stack_inputs<T: Real>(cfg: &CrnnConfig, features: &[&FeatureTensor]) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(features.len() * cfg.in_channels * cfg.input_frames * cfg.bins);
    for f in features {
        if (f.channels, f.frames, f.bins) != (cfg.in_channels, cfg.input_frames, cfg.bins) {
            return Err(Error::size(format!(
                "feature tensor {}×{}×{} does not match the model input {}×{}×{}",
                f.channels, f.frames, f.bins, cfg.in_channels, cfg.input_frames, cfg.bins
            )));
        }
        out.extend(f.data.iter().map(|&v| T::of(v as f64)));
    }
    Ok(out)
}

/// Inference-mode forward for one tensor.
pub fn forward<T: Real>(params: &CrnnParams<T>, features: &FeatureTensor, view: usize) -> Result<Vec<Prediction>> {
    let input = stack_inputs::<T>(&params.config, &[features])?;
    Ok(forward_batch(params, &input, 1, &[view], BnMode::Running)?.predictions(0))
}
