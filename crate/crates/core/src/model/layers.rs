//! Layer kernels with their reverse-mode counterparts. Activations are
//! contiguous row-major buffers; shapes are passed explicitly.

use alloc::vec;
use alloc::vec::Vec;

use super::real::{gemm, gemm_strided, sigmoid, Real, View};

/// Copies `[c, h, w]` into a zero-bordered `[c, h+2, w+2]` buffer with two
/// slack elements, the layout the shifted GEMMs below read from.
fn pad_planes<T: Real>(x: &[T], c: usize, h: usize, w: usize, xp: &mut [T]) {
    let wp = w + 2;
    let p = (h + 2) * wp;
    xp.fill(T::zero());
    for ci in 0..c {
        for y in 0..h {
            let dst = ci * p + (y + 1) * wp + 1;
            xp[dst..dst + w].copy_from_slice(&x[(ci * h + y) * w..][..w]);
        }
    }
}

fn padded_len(c: usize, h: usize, w: usize) -> usize {
    c * (h + 2) * (w + 2) + 2
}

/// 3×3 "same" convolution over a batch `[n, cin, h, w] -> [n, cout, h, w]`.
/// `weight` is `[cout, cin, 3, 3]`. Each kernel tap is one GEMM against a
/// shifted view of the padded input; outputs are computed on the padded
/// width and the two wrap-around columns are dropped.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_forward<T: Real>(x: &[T], n: usize, cin: usize, cout: usize, h: usize, w: usize, weight: &[T], bias: &[T], out: &mut [T]) {
    let wp = w + 2;
    let p = (h + 2) * wp;
    let span = h * wp;
    let mut xp = vec![T::zero(); padded_len(cin, h, w)];
    let mut op = vec![T::zero(); cout * span];
    for b in 0..n {
        pad_planes(&x[b * cin * h * w..], cin, h, w, &mut xp);
        for (co, row) in op.chunks_exact_mut(span).enumerate() {
            row.fill(bias[co]);
        }
        for tap in 0..9 {
            let off = (tap / 3) * wp + tap % 3;
            gemm_strided(
                cout,
                span,
                cin,
                T::one(),
                weight,
                View { offset: tap, rs: cin * 9, cs: 9 },
                &xp,
                View { offset: off, rs: p, cs: 1 },
                T::one(),
                &mut op,
                View::rows(0, span),
            );
        }
        let o = &mut out[b * cout * h * w..(b + 1) * cout * h * w];
        for co in 0..cout {
            for y in 0..h {
                o[(co * h + y) * w..][..w].copy_from_slice(&op[co * span + y * wp..][..w]);
            }
        }
    }
}

/// Gradients of [`conv3x3_forward`]; `dx` is skipped when `None`.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<T: Real>(
    x: &[T],
    dout: &[T],
    n: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    weight: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    let hw = h * w;
    let wp = w + 2;
    let p = (h + 2) * wp;
    let span = h * wp;
    let mut xp = vec![T::zero(); padded_len(cin, h, w)];
    let mut dp = vec![T::zero(); cout * span];
    let mut dxp = if dx.is_some() { vec![T::zero(); padded_len(cin, h, w)] } else { Vec::new() };
    for b in 0..n {
        let d = &dout[b * cout * hw..(b + 1) * cout * hw];
        for (co, row) in d.chunks_exact(hw).enumerate() {
            dbias[co] += row.iter().copied().sum::<T>();
            for y in 0..h {
                dp[co * span + y * wp..][..w].copy_from_slice(&row[y * w..(y + 1) * w]);
            }
        }
        pad_planes(&x[b * cin * hw..], cin, h, w, &mut xp);
        for tap in 0..9 {
            let off = (tap / 3) * wp + tap % 3;
            gemm_strided(
                cout,
                cin,
                span,
                T::one(),
                &dp,
                View::rows(0, span),
                &xp,
                View { offset: off, rs: 1, cs: p },
                T::one(),
                dweight,
                View { offset: tap, rs: cin * 9, cs: 9 },
            );
        }
        if let Some(dx) = dx.as_deref_mut() {
            dxp.fill(T::zero());
            for tap in 0..9 {
                let off = (tap / 3) * wp + tap % 3;
                gemm_strided(
                    cin,
                    span,
                    cout,
                    T::one(),
                    weight,
                    View { offset: tap, rs: 9, cs: cin * 9 },
                    &dp,
                    View::rows(0, span),
                    T::one(),
                    &mut dxp,
                    View { offset: off, rs: p, cs: 1 },
                );
            }
            let dst = &mut dx[b * cin * hw..(b + 1) * cin * hw];
            for ci in 0..cin {
                for y in 0..h {
                    dst[(ci * h + y) * w..][..w].copy_from_slice(&dxp[ci * p + (y + 1) * wp + 1..][..w]);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with the statistics of the current batch.
    Batch,
    /// Normalize with the stored running statistics.
    Running,
}

/// Per-channel state kept for the batch-norm backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Population variance of the batch (or the running variance).
    pub var: Vec<T>,
    pub mode: BnMode,
}

/// Batch norm over `[n, c, hw]`, statistics per channel.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward<T: Real>(
    x: &[T],
    n: usize,
    c: usize,
    hw: usize,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: T,
    mode: BnMode,
    y: &mut [T],
) -> BnCache<T> {
    let count = (n * hw) as f64;
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    match mode {
        BnMode::Batch => {
            for ch in 0..c {
                let mut s = 0.0f64;
                for b in 0..n {
                    s += x[(b * c + ch) * hw..][..hw].iter().map(|v| v.f64()).sum::<f64>();
                }
                let m = s / count;
                let mut ss = 0.0f64;
                for b in 0..n {
                    ss += x[(b * c + ch) * hw..][..hw].iter().map(|v| (v.f64() - m) * (v.f64() - m)).sum::<f64>();
                }
                mean[ch] = T::of(m);
                var[ch] = T::of(ss / count);
            }
        }
        BnMode::Running => {
            mean.copy_from_slice(running_mean);
            var.copy_from_slice(running_var);
        }
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt_l()).collect();
    let mut xhat = vec![T::zero(); n * c * hw];
    for b in 0..n {
        for ch in 0..c {
            let o = (b * c + ch) * hw;
            let (m, is, g, bt) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for i in o..o + hw {
                let xh = (x[i] - m) * is;
                xhat[i] = xh;
                y[i] = g * xh + bt;
            }
        }
    }
    BnCache { xhat, inv_std, mean, var, mode }
}

#[allow(clippy::too_many_arguments)]
pub fn batchnorm_backward<T: Real>(
    dy: &[T],
    cache: &BnCache<T>,
    n: usize,
    c: usize,
    hw: usize,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
    dx: &mut [T],
) {
    let count = T::of((n * hw) as f64);
    for ch in 0..c {
        let mut sd64 = 0.0f64;
        let mut sdx64 = 0.0f64;
        for b in 0..n {
            let o = (b * c + ch) * hw;
            let mut sd = T::zero();
            let mut sdx = T::zero();
            for i in o..o + hw {
                sd += dy[i];
                sdx += dy[i] * cache.xhat[i];
            }
            sd64 += sd.f64();
            sdx64 += sdx.f64();
        }
        let (sd, sdx) = (T::of(sd64), T::of(sdx64));
        dbeta[ch] += sd;
        dgamma[ch] += sdx;
        let g = gamma[ch];
        let is = cache.inv_std[ch];
        match cache.mode {
            BnMode::Batch => {
                // d xhat = g·dy; sums of d xhat are g·sd and g·sdx.
                let k = g * is / count;
                for b in 0..n {
                    let o = (b * c + ch) * hw;
                    for i in o..o + hw {
                        dx[i] = k * (count * dy[i] - sd - cache.xhat[i] * sdx);
                    }
                }
            }
            BnMode::Running => {
                for b in 0..n {
                    let o = (b * c + ch) * hw;
                    for i in o..o + hw {
                        dx[i] = g * is * dy[i];
                    }
                }
            }
        }
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `dy` by the positive outputs `y` of a ReLU.
pub fn relu_backward_inplace<T: Real>(y: &[T], dy: &mut [T]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
}

/// 2×2 average pooling with stride 2 over `[planes, h, w]`.
pub fn avgpool2_forward<T: Real>(x: &[T], planes: usize, h: usize, w: usize, y: &mut [T]) {
    let (ho, wo) = (h / 2, w / 2);
    let q = T::of(0.25);
    for p in 0..planes {
        let src = &x[p * h * w..];
        let dst = &mut y[p * ho * wo..];
        for i in 0..ho {
            let r0 = &src[2 * i * w..];
            let r1 = &src[(2 * i + 1) * w..];
            for j in 0..wo {
                dst[i * wo + j] = q * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
            }
        }
    }
}

pub fn avgpool2_backward<T: Real>(dy: &[T], planes: usize, h: usize, w: usize, dx: &mut [T]) {
    let (ho, wo) = (h / 2, w / 2);
    let q = T::of(0.25);
    for p in 0..planes {
        let d = &dy[p * ho * wo..];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for i in 0..ho {
            for j in 0..wo {
                let g = q * d[i * wo + j];
                dst[2 * i * w + 2 * j] = g;
                dst[2 * i * w + 2 * j + 1] = g;
                dst[(2 * i + 1) * w + 2 * j] = g;
                dst[(2 * i + 1) * w + 2 * j + 1] = g;
            }
        }
    }
}

/// `y[rows, out] = x[rows, in]·Wᵀ + b` with `W` stored `[out, in]`.
pub fn linear_forward<T: Real>(x: &[T], rows: usize, din: usize, dout: usize, weight: &[T], bias: &[T], y: &mut [T]) {
    for r in 0..rows {
        y[r * dout..(r + 1) * dout].copy_from_slice(&bias[..dout]);
    }
    gemm(false, true, rows, dout, din, T::one(), x, weight, T::one(), y);
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    x: &[T],
    dy: &[T],
    rows: usize,
    din: usize,
    dout: usize,
    weight: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    dx: Option<&mut [T]>,
) {
    gemm(true, false, dout, din, rows, T::one(), dy, x, T::one(), dweight);
    for r in 0..rows {
        for (db, &d) in dbias.iter_mut().zip(&dy[r * dout..(r + 1) * dout]) {
            *db += d;
        }
    }
    if let Some(dx) = dx {
        gemm(false, false, rows, din, dout, T::one(), dy, weight, T::zero(), dx);
    }
}

/// Parameters of one GRU direction. Gate blocks are ordered reset, update,
/// candidate along the `3H` axis.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a, T> {
    pub w_ih: &'a [T],
    pub w_hh: &'a [T],
    pub b_ih: &'a [T],
    pub b_hh: &'a [T],
    pub input: usize,
    pub hidden: usize,
}

pub struct GruGrads<'a, T> {
    pub w_ih: &'a mut [T],
    pub w_hh: &'a mut [T],
    pub b_ih: &'a mut [T],
    pub b_hh: &'a mut [T],
}

/// Per-step gate values for one sequence, in processing order.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    pub r: Vec<T>,
    pub z: Vec<T>,
    pub n: Vec<T>,
    pub hn: Vec<T>,
    pub h: Vec<T>,
    pub reverse: bool,
}

/// Runs one direction over `x[steps, input]`. The hidden state starts at
/// zero. Outputs are written in time order into `out` with row stride
/// `out_stride` starting at column `out_col`.
pub fn gru_forward<T: Real>(x: &[T], steps: usize, p: GruWeights<'_, T>, reverse: bool, out: &mut [T], out_stride: usize, out_col: usize) -> GruCache<T> {
    let hdim = p.hidden;
    let g3 = 3 * hdim;
    let mut gi = vec![T::zero(); steps * g3];
    linear_forward(x, steps, p.input, g3, p.w_ih, p.b_ih, &mut gi);
    let mut cache = GruCache {
        r: vec![T::zero(); steps * hdim],
        z: vec![T::zero(); steps * hdim],
        n: vec![T::zero(); steps * hdim],
        hn: vec![T::zero(); steps * hdim],
        h: vec![T::zero(); steps * hdim],
        reverse,
    };
    let mut h = vec![T::zero(); hdim];
    let mut gh = vec![T::zero(); g3];
    for s in 0..steps {
        let t = if reverse { steps - 1 - s } else { s };
        gh.copy_from_slice(p.b_hh);
        gemm(false, false, g3, 1, hdim, T::one(), p.w_hh, &h, T::one(), &mut gh);
        let gi_t = &gi[t * g3..(t + 1) * g3];
        for j in 0..hdim {
            let r = sigmoid(gi_t[j] + gh[j]);
            let z = sigmoid(gi_t[hdim + j] + gh[hdim + j]);
            let hn = gh[2 * hdim + j];
            let nn = (gi_t[2 * hdim + j] + r * hn).tanh_l();
            let hv = (T::one() - z) * nn + z * h[j];
            let k = s * hdim + j;
            cache.r[k] = r;
            cache.z[k] = z;
            cache.n[k] = nn;
            cache.hn[k] = hn;
            cache.h[k] = hv;
            h[j] = hv;
        }
        out[t * out_stride + out_col..][..hdim].copy_from_slice(&h);
    }
    cache
}

/// Backpropagation through time for one direction. `dout` holds the
/// gradient w.r.t. the outputs (same layout as the forward `out`). The input
/// gradient is accumulated into `dx`.
#[allow(clippy::too_many_arguments)]
pub fn gru_backward<T: Real>(
    x: &[T],
    steps: usize,
    p: GruWeights<'_, T>,
    cache: &GruCache<T>,
    dout: &[T],
    out_stride: usize,
    out_col: usize,
    g: GruGrads<'_, T>,
    dx: Option<&mut [T]>,
) {
    let hdim = p.hidden;
    let g3 = 3 * hdim;
    let mut dgi = vec![T::zero(); steps * g3];
    let mut dh_next = vec![T::zero(); hdim];
    let mut dgh = vec![T::zero(); g3];
    let zero_h = vec![T::zero(); hdim];
    for s in (0..steps).rev() {
        let t = if cache.reverse { steps - 1 - s } else { s };
        let h_prev = if s == 0 { &zero_h[..] } else { &cache.h[(s - 1) * hdim..s * hdim] };
        let d_out = &dout[t * out_stride + out_col..][..hdim];
        let dgi_t = &mut dgi[t * g3..(t + 1) * g3];
        for j in 0..hdim {
            let k = s * hdim + j;
            let (r, z, nn, hn) = (cache.r[k], cache.z[k], cache.n[k], cache.hn[k]);
            let dh = d_out[j] + dh_next[j];
            let dn_pre = dh * (T::one() - z) * (T::one() - nn * nn);
            let dz_pre = dh * (h_prev[j] - nn) * z * (T::one() - z);
            let dr_pre = dn_pre * hn * r * (T::one() - r);
            dgi_t[j] = dr_pre;
            dgi_t[hdim + j] = dz_pre;
            dgi_t[2 * hdim + j] = dn_pre;
            dgh[j] = dr_pre;
            dgh[hdim + j] = dz_pre;
            dgh[2 * hdim + j] = dn_pre * r;
            dh_next[j] = dh * z;
        }
        gemm(false, false, g3, hdim, 1, T::one(), &dgh, h_prev, T::one(), g.w_hh);
        for (b, &d) in g.b_hh.iter_mut().zip(&dgh) {
            *b += d;
        }
        gemm(true, false, hdim, 1, g3, T::one(), p.w_hh, &dgh, T::one(), &mut dh_next);
    }
    match dx {
        Some(dx) => {
            let mut tmp = vec![T::zero(); steps * p.input];
            linear_backward(x, &dgi, steps, p.input, g3, p.w_ih, g.w_ih, g.b_ih, Some(&mut tmp));
            for (a, b) in dx.iter_mut().zip(&tmp) {
                *a += *b;
            }
        }
        None => linear_backward(x, &dgi, steps, p.input, g3, p.w_ih, g.w_ih, g.b_ih, None),
    }
}
