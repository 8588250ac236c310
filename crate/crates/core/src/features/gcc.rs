use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::mel::{log_mel, MelFilterbank};
use super::stft::{stft, Spectrogram, StftConfig};
use super::{FeatureKind, FeatureTensor, F_IN};
use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::geometry::{ArrayGeometry, CameraModel};
use crate::sim::MultichannelClip;

/// Width of the lag axis; lag 0 sits at index `GCC_LAGS / 2`.
pub const GCC_LAGS: usize = 64;
pub const PHAT_EPS: f64 = 1e-8;

/// `round(d_rel / c * fs)` with `d_rel = d_max * sin(fov / 2)`; fails when the
/// `±` lag range cannot fit on the 64-lag axis.
pub fn max_lag(geometry: &ArrayGeometry, camera: &CameraModel) -> Result<usize> {
    let d_rel = geometry.max_aperture() * libm::sin((camera.horizontal_fov_deg / 2.0).to_radians());
    max_lag_for_aperture(d_rel, geometry.speed_of_sound, geometry.sample_rate)
}

pub fn max_lag_for_aperture(d_rel: f64, speed_of_sound: f64, sample_rate: f64) -> Result<usize> {
    let lag = libm::round(d_rel / speed_of_sound * sample_rate);
    if !(lag >= 0.0) {
        return Err(Error::config(format!("negative lag budget for aperture {d_rel}")));
    }
    let lag = lag as usize;
    if 2 * lag + 1 > GCC_LAGS {
        return Err(Error::config(format!(
            "max lag {lag} needs {} lag bins but the feature axis has {GCC_LAGS}",
            2 * lag + 1
        )));
    }
    Ok(lag)
}

/// PHAT-weighted cross-correlation of one frame, central lags `-32..=31`.
///
/// `out[32 + tau] = r(tau)` with `r(tau) = sum_n x_ref[n + tau] x_m[n]` after
/// whitening, so a delay of `d` samples of `x_m` relative to `x_ref` peaks at
/// `tau = -d`.
pub fn gcc_phat_frame(reference: &[Complex64], other: &[Complex64], plan: &Fft, out: &mut [f64]) {
    let n = plan.len();
    let bins = n / 2 + 1;
    debug_assert_eq!(reference.len(), bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..bins {
        let cross = reference[k] * other[k].conj();
        let mag = libm::hypot(cross.re, cross.im);
        let w = if mag > PHAT_EPS { cross / mag } else { Complex64::new(0.0, 0.0) };
        buf[k] = w;
        if k > 0 && k < n / 2 {
            buf[n - k] = w.conj();
        }
    }
    plan.inverse(&mut buf);
    let half = (GCC_LAGS / 2) as i64;
    for (i, o) in out.iter_mut().enumerate().take(GCC_LAGS) {
        let tau = i as i64 - half;
        *o = buf[tau.rem_euclid(n as i64) as usize].re;
    }
}

pub fn gcc_phat_features(clip: &MultichannelClip, geometry: &ArrayGeometry, cfg: &StftConfig) -> Result<FeatureTensor> {
    clip.validate(geometry)?;
    let reference = geometry.reference_mic_index;
    let specs: Vec<Spectrogram> = clip.channels.iter().map(|ch| stft(ch, cfg)).collect::<Result<_>>()?;
    let frames = cfg.n_frames();
    let mut out = FeatureTensor::zeros(FeatureKind::GccPhat, geometry.n_mics(), frames, F_IN);

    let bank = MelFilterbank::new(F_IN, cfg.window_size, cfg.sample_rate);
    let mel = log_mel(&specs[reference].power(), &bank)?;
    for (dst, src) in out.channel_mut(0).iter_mut().zip(&mel) {
        *dst = *src as f32;
    }

    let plan = Fft::new(cfg.window_size)?;
    let mut row = vec![0.0; GCC_LAGS];
    let others = (0..geometry.n_mics()).filter(|&m| m != reference);
    for (c, mic) in others.enumerate() {
        for t in 0..frames {
            gcc_phat_frame(specs[reference].frame(t), specs[mic].frame(t), &plan, &mut row);
            let base = out.index(c + 1, t, 0);
            for (dst, src) in out.data[base..base + GCC_LAGS].iter_mut().zip(&row) {
                *dst = *src as f32;
            }
        }
    }
    Ok(out)
}
