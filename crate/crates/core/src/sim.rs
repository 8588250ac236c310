//! Synthetic multichannel scenes with known speaker trajectories.
//!
//! A mono source is gated by its voice segments, delayed per microphone with
//! a 31-tap windowed-sinc fractional-delay kernel and (optionally) corrupted
//! with per-channel pink noise at a target SNR.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;


use crate::error::{Error, Result};
use crate::geometry::{self, ArrayGeometry, CameraModel, Point};
use crate::rng;

/// Half-width of the fractional-delay kernel (31 taps).
pub const SINC_HALF_TAPS: i64 = 15;

/// Piecewise-linear azimuth trajectory; clamped outside its first/last knot.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    /// `(time_s, azimuth_deg)` knots sorted by time.
    pub knots: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn fixed(azimuth_deg: f64) -> Self {
        Self { knots: vec![(0.0, azimuth_deg)] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::config("trajectory needs at least one knot"));
        }
        if self.knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::config("trajectory knots must have strictly increasing times"));
        }
        Ok(())
    }

    pub fn azimuth_at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        // Binary search keeps long renders linear-time overall.
        let idx = k.partition_point(|&(kt, _)| kt <= t);
        if idx >= k.len() {
            return k[k.len() - 1].1;
        }
        let (t0, a0) = k[idx - 1];
        let (t1, a1) = k[idx];
        a0 + (a1 - a0) * (t - t0) / (t1 - t0)
    }

    fn extrema(&self) -> (f64, f64) {
        self.knots
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, a)| (lo.min(a), hi.max(a)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "model", rename_all = "kebab-case"))]
pub enum Propagation {
    /// Plane wave, no attenuation.
    FarField,
    /// Point source at `range_m` from the array origin with spherical
    /// spreading (`1/r` gain normalized to the origin).
    NearField { range_m: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneSpec {
    pub duration_s: f64,
    pub trajectory: Trajectory,
    /// Sorted, disjoint `(onset_s, offset_s)` speech segments.
    pub voice_segments: Vec<(f64, f64)>,
    pub snr_db: Option<f64>,
    pub rng_seed: u64,
    /// Position of a silent second actor; only consumed by synthetic teachers.
    pub distractor: Option<Trajectory>,
    pub propagation: Propagation,
}

impl SceneSpec {
    pub fn validate(&self, camera: &CameraModel) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::config("scene duration must be positive"));
        }
        self.trajectory.validate()?;
        validate_segments(&self.voice_segments, self.duration_s)?;
        for traj in core::iter::once(&self.trajectory).chain(self.distractor.iter()) {
            let (lo, hi) = traj.extrema();
            if !camera.contains(lo) || !camera.contains(hi) {
                return Err(Error::Domain { what: "trajectory azimuth outside camera FoV (deg)", value: if camera.contains(lo) { hi } else { lo } });
            }
        }
        if let Propagation::NearField { range_m } = self.propagation {
            if !(range_m > 1.0) {
                return Err(Error::config("near-field range must exceed 1 m"));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self, sample_rate: f64) -> usize {
        libm::round(self.duration_s * sample_rate) as usize
    }
}

pub fn validate_segments(segments: &[(f64, f64)], duration_s: f64) -> Result<()> {
    let mut prev_end = 0.0f64;
    for (i, &(on, off)) in segments.iter().enumerate() {
        if !(on < off) || on < 0.0 || off > duration_s + 1e-9 {
            return Err(Error::config(format!("voice segment {i} ({on}, {off}) invalid for duration {duration_s}")));
        }
        if i > 0 && on < prev_end {
            return Err(Error::config(format!("voice segment {i} overlaps or is unsorted")));
        }
        prev_end = off;
    }
    Ok(())
}

/// Sample `n` is active iff `n / fs` lies in some `[onset, offset)`.
pub fn activity_mask(segments: &[(f64, f64)], n_samples: usize, sample_rate: f64) -> Vec<bool> {
    let mut mask = vec![false; n_samples];
    for &(on, off) in segments {
        let start = libm::ceil(on * sample_rate).max(0.0) as usize;
        let end = (libm::ceil(off * sample_rate) as usize).min(n_samples);
        for m in mask.iter_mut().take(end).skip(start) {
            *m = true;
        }
    }
    mask
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelClip {
    /// Channel-major samples, one `Vec` per microphone.
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: f64,
    /// Speech segments of the clip (seconds), used as the SNR reference.
    pub active_segments: Vec<(f64, f64)>,
}

impl MultichannelClip {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate
    }

    pub fn validate(&self, geometry: &ArrayGeometry) -> Result<()> {
        if self.n_channels() != geometry.n_mics() {
            return Err(Error::size(format!("clip has {} channels, array has {} mics", self.n_channels(), geometry.n_mics())));
        }
        let n = self.n_samples();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::size("ragged channels"));
        }
        if self.channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("clip contains non-finite samples".into()));
        }
        Ok(())
    }

    /// Copy of `[start, start + len)` samples with segments re-based.
    pub fn slice(&self, start: usize, len: usize) -> Result<MultichannelClip> {
        if start + len > self.n_samples() {
            return Err(Error::size(format!("slice {start}+{len} exceeds clip of {} samples", self.n_samples())));
        }
        let t0 = start as f64 / self.sample_rate;
        let t1 = (start + len) as f64 / self.sample_rate;
        let active_segments = self
            .active_segments
            .iter()
            .filter_map(|&(on, off)| {
                let (a, b) = (on.max(t0), off.min(t1));
                (a < b).then_some((a - t0, b - t0))
            })
            .collect();
        Ok(MultichannelClip {
            channels: self.channels.iter().map(|c| c[start..start + len].to_vec()).collect(),
            sample_rate: self.sample_rate,
            active_segments,
        })
    }
}

/// Windowed-sinc interpolator with a Blackman window. The per-tap window
/// angles are tabulated so a read costs two sin/cos pairs.
struct SincKernel {
    /// `(cos kδ, sin kδ, cos 2kδ, sin 2kδ)` for tap offsets `k`, δ = π / half-width.
    taps: Vec<(f64, f64, f64, f64)>,
    delta: f64,
}

impl SincKernel {
    fn new() -> Self {
        let delta = PI / (SINC_HALF_TAPS + 1) as f64;
        let taps = (-SINC_HALF_TAPS..=SINC_HALF_TAPS)
            .map(|k| {
                let a = k as f64 * delta;
                (libm::cos(a), libm::sin(a), libm::cos(2.0 * a), libm::sin(2.0 * a))
            })
            .collect();
        Self { taps, delta }
    }

    /// Reads `signal` at fractional position `pos`; out-of-range taps read zero.
    fn read(&self, signal: &[f64], pos: f64) -> f64 {
        let base = libm::floor(pos);
        let frac = pos - base;
        let i0 = base as i64;
        let n = signal.len() as i64;
        if frac == 0.0 {
            return if (0..n).contains(&i0) { signal[i0 as usize] } else { 0.0 };
        }
        // sin(pi (k - frac)) = -(-1)^k sin(pi frac) for integer k.
        let s = libm::sin(PI * frac);
        let a = frac * self.delta;
        let (ca, sa) = (libm::cos(a), libm::sin(a));
        let (c2a, s2a) = (libm::cos(2.0 * a), libm::sin(2.0 * a));
        let mut acc = 0.0;
        for (j, &(ck, sk, c2k, s2k)) in self.taps.iter().enumerate() {
            let k = j as i64 - SINC_HALF_TAPS;
            let idx = i0 + k;
            if idx < 0 || idx >= n {
                continue;
            }
            let t = frac - k as f64;
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            let sinc = -sign * s / (PI * t);
            // Window at x = a - kδ, never outside |t| < half-width here.
            let window = 0.42 + 0.5 * (ca * ck + sa * sk) + 0.08 * (c2a * c2k + s2a * s2k);
            acc += signal[idx as usize] * sinc * window;
        }
        acc
    }
}

/// Per-mic delay in seconds (relative to the origin) and gain for a source at
/// `azimuth_deg`.
fn mic_response(geometry: &ArrayGeometry, propagation: Propagation, azimuth_deg: f64, mic: usize) -> (f64, f64) {
    let u = geometry::azimuth_direction(azimuth_deg);
    let p = &geometry.mic_positions[mic];
    match propagation {
        Propagation::FarField => (-geometry::dot(p, &u) / geometry.speed_of_sound, 1.0),
        Propagation::NearField { range_m } => {
            let src: Point = [u[0] * range_m, u[1] * range_m, u[2] * range_m];
            let r = geometry::distance(&src, p);
            ((r - range_m) / geometry.speed_of_sound, range_m / r)
        }
    }
}

/// Renders the scene: each channel is the gated source delayed by its
/// per-mic propagation delay, then re-gated so samples outside the voice
/// segments are exactly zero.
pub fn render_scene(spec: &SceneSpec, geometry: &ArrayGeometry, source: &[f64]) -> Result<MultichannelClip> {
    geometry.validate()?;
    spec.trajectory.validate()?;
    validate_segments(&spec.voice_segments, spec.duration_s)?;
    let fs = geometry.sample_rate;
    let n = spec.n_samples(fs);
    if source.len() < n {
        return Err(Error::size(format!("source has {} samples, scene needs {n}", source.len())));
    }
    let mask = activity_mask(&spec.voice_segments, n, fs);
    let gated: Vec<f64> = source[..n].iter().zip(&mask).map(|(&s, &m)| if m { s } else { 0.0 }).collect();
    let mut channels = vec![vec![0.0; n]; geometry.n_mics()];
    if mask.iter().any(|&m| m) {
        let kernel = SincKernel::new();
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            let az = spec.trajectory.azimuth_at(i as f64 / fs);
            for (mic, ch) in channels.iter_mut().enumerate() {
                let (delay, gain) = mic_response(geometry, spec.propagation, az, mic);
                ch[i] = gain * kernel.read(&gated, i as f64 - delay * fs);
            }
        }
    }
    Ok(MultichannelClip { channels, sample_rate: fs, active_segments: spec.voice_segments.clone() })
}

/// White Gaussian noise through a one-pole low-pass at 500 Hz (−6 dB/octave
/// above the corner), scaled to `rms`.
pub fn speech_shaped_noise(n_samples: usize, sample_rate: f64, rms: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, 0x5eec);
    let a = libm::exp(-2.0 * PI * 500.0 / sample_rate);
    let mut state = 0.0;
    let mut out: Vec<f64> = (0..n_samples)
        .map(|_| {
            let w = rng::standard_normal(&mut rng);
            state = a * state + (1.0 - a) * w;
            state
        })
        .collect();
    scale_to_rms(&mut out, rms);
    out
}

fn scale_to_rms(x: &mut [f64], rms: f64) {
    if x.is_empty() {
        return;
    }
    let p = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if p > 0.0 {
        let g = rms / libm::sqrt(p);
        x.iter_mut().for_each(|v| *v *= g);
    }
}

/// Pink (1/f power) noise from a bank of seven one-pole filters
/// (Kellet's refined coefficients).
pub fn pink_noise(n_samples: usize, seed: u64, stream: u64) -> Vec<f64> {
    const WARMUP: usize = 8192;
    let mut rng = rng::stream(seed, stream);
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n_samples);
    for i in 0..n_samples + WARMUP {
        let white = rng::standard_normal(&mut rng);
        b[0] = 0.99886 * b[0] + white * 0.0555179;
        b[1] = 0.99332 * b[1] + white * 0.0750759;
        b[2] = 0.96900 * b[2] + white * 0.1538520;
        b[3] = 0.86650 * b[3] + white * 0.3104856;
        b[4] = 0.55000 * b[4] + white * 0.5329522;
        b[5] = -0.7616 * b[5] - white * 0.0168980;
        let v = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + white * 0.5362;
        b[6] = white * 0.115926;
        if i >= WARMUP {
            out.push(v);
        }
    }
    out
}

/// Adds independent pink noise to every channel so that the mean signal
/// power over the voice-active samples divided by the noise power over the
/// same samples equals `snr_db`. `f64::INFINITY` returns the clip unchanged.
pub fn add_pink_noise(clip: &MultichannelClip, snr_db: f64, rng_seed: u64) -> Result<MultichannelClip> {
    if snr_db == f64::INFINITY {
        return Ok(clip.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Domain { what: "snr (dB)", value: snr_db });
    }
    let n = clip.n_samples();
    let mask = activity_mask(&clip.active_segments, n, clip.sample_rate);
    let n_active = mask.iter().filter(|&&m| m).count();
    let signal_power = active_power(&clip.channels, &mask);
    if n_active == 0 || signal_power <= 0.0 {
        return Err(Error::Precondition("SNR undefined: clip has no voice-active signal".into()));
    }
    let noise: Vec<Vec<f64>> = (0..clip.n_channels()).map(|c| pink_noise(n, rng_seed, c as u64)).collect();
    let noise_power = active_power(&noise, &mask);
    let gain = libm::sqrt(signal_power / (noise_power * libm::pow(10.0, snr_db / 10.0)));
    let channels = clip
        .channels
        .iter()
        .zip(&noise)
        .map(|(s, w)| s.iter().zip(w).map(|(a, b)| a + gain * b).collect())
        .collect();
    Ok(MultichannelClip { channels, sample_rate: clip.sample_rate, active_segments: clip.active_segments.clone() })
}

/// Mean power over all channels restricted to the masked samples.
pub fn active_power(channels: &[Vec<f64>], mask: &[bool]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ch in channels {
        for (v, &m) in ch.iter().zip(mask) {
            if m {
                sum += v * v;
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
