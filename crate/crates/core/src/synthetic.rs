//! Random single-speaker scenes with their ground-truth label tracks, used
//! for the desk-scale benchmark splits.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::Result;
use crate::geometry::{ArrayGeometry, CameraModel};
use crate::rng;
use crate::sim::{add_pink_noise, render_scene, speech_shaped_noise, MultichannelClip, Propagation, SceneSpec, Trajectory};
use crate::supervision::{LabelFrame, LabelTrack, FRAME_RATE};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneParams {
    pub duration_s: f64,
    /// Speaker azimuths are drawn from `[-max, max]` degrees.
    pub max_azimuth_deg: f64,
    /// Spacing of the trajectory knots; azimuth is linear in between.
    pub knot_interval_s: f64,
    pub speech_s: (f64, f64),
    pub silence_s: (f64, f64),
    pub snr_db: Option<f64>,
    pub propagation: Propagation,
    /// Adds a silent second actor (used by the weak synthetic teacher).
    pub distractor: bool,
    /// Minimum azimuth separation between the distractor and any speaker
    /// position, degrees.
    pub distractor_gap_deg: f64,
    pub source_rms: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            duration_s: 6.0,
            max_azimuth_deg: 20.0,
            knot_interval_s: 1.0,
            speech_s: (0.6, 2.0),
            silence_s: (0.3, 1.0),
            snr_db: None,
            propagation: Propagation::NearField { range_m: 3.5 },
            distractor: true,
            distractor_gap_deg: 6.0,
            source_rms: 0.1,
        }
    }
}

/// Draws a moving-speaker scene. Voice segments alternate with silences,
/// starting with a short lead-in.
pub fn random_scene(params: &SceneParams, seed: u64) -> SceneSpec {
    let mut r = rng::stream(seed, 0x5cee);
    let d = params.duration_s;
    let max = params.max_azimuth_deg;
    let n_knots = (libm::ceil(d / params.knot_interval_s) as usize).max(1) + 1;
    let knots: Vec<(f64, f64)> = (0..n_knots)
        .map(|k| ((k as f64 * params.knot_interval_s).min(d), r.random_range(-max..=max)))
        .collect();
    let mut knots_dedup: Vec<(f64, f64)> = Vec::with_capacity(knots.len());
    for k in knots {
        if knots_dedup.last().is_none_or(|l| k.0 > l.0) {
            knots_dedup.push(k);
        }
    }
    let mut segments = Vec::new();
    let mut t = r.random_range(0.0..0.5);
    while t < d {
        let on = t;
        let off = (on + r.random_range(params.speech_s.0..params.speech_s.1)).min(d);
        if off - on >= 0.2 {
            segments.push((on, off));
        }
        t = off + r.random_range(params.silence_s.0..params.silence_s.1);
    }
    let distractor = params.distractor.then(|| {
        let (lo, hi) = knots_dedup.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, a)| (lo.min(a), hi.max(a)));
        let edge = max + 5.0;
        let mut candidates = Vec::new();
        if lo - params.distractor_gap_deg > -edge {
            candidates.push((-edge, lo - params.distractor_gap_deg));
        }
        if hi + params.distractor_gap_deg < edge {
            candidates.push((hi + params.distractor_gap_deg, edge));
        }
        let az = match candidates.len() {
            0 => if r.random::<bool>() { -edge } else { edge },
            n => {
                let (a, b) = candidates[r.random_range(0..n)];
                r.random_range(a..=b)
            }
        };
        Trajectory::fixed(az)
    });
    SceneSpec {
        duration_s: d,
        trajectory: Trajectory { knots: knots_dedup },
        voice_segments: segments,
        snr_db: params.snr_db,
        rng_seed: seed,
        distractor,
        propagation: params.propagation,
    }
}

/// Renders a scene with a speech-shaped source derived from its seed and
/// adds pink noise when the scene carries a finite SNR.
pub fn render(spec: &SceneSpec, geometry: &ArrayGeometry, source_rms: f64) -> Result<MultichannelClip> {
    let n = spec.n_samples(geometry.sample_rate);
    let source = speech_shaped_noise(n, geometry.sample_rate, source_rms, rng::mix(spec.rng_seed, 0x50c));
    let clip = render_scene(spec, geometry, &source)?;
    match spec.snr_db {
        Some(snr) if snr.is_finite() && clip.active_segments.iter().any(|s| s.1 > s.0) => add_pink_noise(&clip, snr, rng::mix(spec.rng_seed, 0x9a1)),
        _ => Ok(clip),
    }
}

fn in_segments(segments: &[(f64, f64)], t: f64) -> bool {
    segments.iter().any(|&(on, off)| t >= on && t < off)
}

/// Video frame count covering `duration_s`.
pub fn n_frames(duration_s: f64) -> usize {
    libm::floor(duration_s * FRAME_RATE + 1e-9) as usize
}

/// Ground-truth track for one view: a frame is active when its midpoint
/// falls inside a voice segment, with the projected speaker position.
pub fn gt_track(spec: &SceneSpec, camera: &CameraModel) -> Result<LabelTrack> {
    let n = n_frames(spec.duration_s);
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let t = (i as f64 + 0.5) / FRAME_RATE;
        if in_segments(&spec.voice_segments, t) {
            let x = camera.project(spec.trajectory.azimuth_at(t))? / camera.image_width;
            frames.push(LabelFrame { frame: i as u32, view: camera.view_index, active: true, x_norm: Some(x), confidence: Some(1.0) });
        } else {
            frames.push(LabelFrame::inactive(i as u32, camera.view_index));
        }
    }
    LabelTrack::new(FRAME_RATE, frames)
}

/// Normalized image position of the distractor on every frame.
pub fn distractor_track(spec: &SceneSpec, camera: &CameraModel) -> Result<Option<Vec<f64>>> {
    let Some(d) = &spec.distractor else { return Ok(None) };
    let n = n_frames(spec.duration_s);
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let t = (i as f64 + 0.5) / FRAME_RATE;
        *o = camera.project(d.azimuth_at(t))? / camera.image_width;
    }
    Ok(Some(out))
}

/// Start samples of `chunk`-long windows at `hop` spacing that fit in `n`.
pub fn chunk_starts(n: usize, chunk: usize, hop: usize) -> Vec<usize> {
    if n < chunk || hop == 0 {
        return Vec::new();
    }
    (0..=(n - chunk) / hop).map(|k| k * hop).collect()
}
