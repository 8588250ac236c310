//! Training targets from location pseudo-labels and voice-activity labels.
//!
//! The confidence target belongs to the voice-activity source alone; the
//! location source only decides whether the regression term is active. A
//! teacher that misses a speaker (occlusion) therefore never produces a
//! negative confidence target.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::sim::validate_segments;

pub const FRAME_RATE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelFrame {
    pub frame: u32,
    pub view: usize,
    pub active: bool,
    /// Horizontal position normalized by the image width; only present on
    /// active frames.
    pub x_norm: Option<f64>,
    pub confidence: Option<f64>,
}

impl LabelFrame {
    pub fn inactive(frame: u32, view: usize) -> Self {
        Self { frame, view, active: false, x_norm: None, confidence: None }
    }

    pub fn detection(&self) -> Option<f64> {
        if self.active {
            self.x_norm
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelTrack {
    pub frame_rate: f64,
    pub frames: Vec<LabelFrame>,
}

impl LabelTrack {
    pub fn new(frame_rate: f64, frames: Vec<LabelFrame>) -> Result<Self> {
        let track = Self { frame_rate, frames };
        track.validate()?;
        Ok(track)
    }

    pub fn empty(frame_rate: f64) -> Self {
        Self { frame_rate, frames: Vec::new() }
    }

    /// Dense single-view track covering frames `0..detections.len()`.
    pub fn from_detections(view: usize, detections: &[Option<f64>]) -> Self {
        let frames = detections
            .iter()
            .enumerate()
            .map(|(i, d)| LabelFrame { frame: i as u32, view, active: d.is_some(), x_norm: *d, confidence: None })
            .collect();
        Self { frame_rate: FRAME_RATE, frames }
    }

    pub fn validate(&self) -> Result<()> {
        let mut last: Vec<(usize, u32)> = Vec::new();
        for (i, f) in self.frames.iter().enumerate() {
            if let Some(x) = f.x_norm {
                if !f.active || !(0.0..=1.0).contains(&x) {
                    return Err(Error::Precondition(format!("record {i}: x_norm {x} on an inactive frame or outside [0, 1]")));
                }
            }
            match last.iter_mut().find(|(v, _)| *v == f.view) {
                Some((_, prev)) if f.frame <= *prev => {
                    return Err(Error::Precondition(format!("record {i}: frame {} not increasing for view {}", f.frame, f.view)));
                }
                Some((_, prev)) => *prev = f.frame,
                None => last.push((f.view, f.frame)),
            }
        }
        Ok(())
    }

    pub fn views(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.frames.iter().map(|f| f.view).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn for_view(&self, view: usize) -> LabelTrack {
        LabelTrack { frame_rate: self.frame_rate, frames: self.frames.iter().filter(|f| f.view == view).copied().collect() }
    }

    /// Per-frame detections of `view` for frames `start..start + n`; frames
    /// absent from the track count as no detection.
    pub fn detections(&self, view: usize, start: u32, n: usize) -> Vec<Option<f64>> {
        let mut out = vec![None; n];
        for f in self.frames.iter().filter(|f| f.view == view) {
            if f.frame >= start && ((f.frame - start) as usize) < n {
                out[(f.frame - start) as usize] = f.detection();
            }
        }
        out
    }

    pub fn active_count(&self) -> usize {
        self.frames.iter().filter(|f| f.active).count()
    }
}

/// One row of a teacher (or ground-truth) prediction file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherRecord {
    pub frame: u32,
    pub view: usize,
    pub active: bool,
    pub x_left_px: Option<f64>,
    pub x_right_px: Option<f64>,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedTrack {
    pub track: LabelTrack,
    /// Records whose box center fell outside the image.
    pub rejected: usize,
}

/// Reduces bounding boxes to normalized horizontal centers. Frames without a
/// box or flagged inactive become `active = false`.
pub fn ingest_teacher_records(records: &[TeacherRecord], image_width: f64, frame_rate: f64) -> Result<IngestedTrack> {
    let mut frames = Vec::with_capacity(records.len());
    let mut rejected = 0;
    for r in records {
        let center = match (r.active, r.x_left_px, r.x_right_px) {
            (true, Some(l), Some(rt)) => Some((l + rt) / 2.0 / image_width),
            _ => None,
        };
        match center {
            Some(x) if !(0.0..=1.0).contains(&x) || !x.is_finite() => rejected += 1,
            Some(x) => frames.push(LabelFrame { frame: r.frame, view: r.view, active: true, x_norm: Some(x), confidence: r.confidence }),
            None => frames.push(LabelFrame { frame: r.frame, view: r.view, active: false, x_norm: None, confidence: r.confidence }),
        }
    }
    Ok(IngestedTrack { track: LabelTrack::new(frame_rate, frames)?, rejected })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum VaSource {
    Gt,
    Vad,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VaTrack {
    pub segments: Vec<(f64, f64)>,
    pub source: VaSource,
}

impl VaTrack {
    pub fn new(segments: Vec<(f64, f64)>, source: VaSource) -> Result<Self> {
        validate_segments(&segments, f64::INFINITY)?;
        Ok(Self { segments, source })
    }
}

/// Frame `i` is active iff its midpoint `(i + 0.5) / frame_rate` lies in a
/// segment `[onset, offset)`.
pub fn rasterize_va(track: &VaTrack, frame_rate: f64, n_frames: usize) -> Vec<bool> {
    (0..n_frames)
        .map(|i| {
            let t = (i as f64 + 0.5) / frame_rate;
            track.segments.iter().any(|&(on, off)| t >= on && t < off)
        })
        .collect()
}

/// Frame-energy VAD: 30 ms frames above −40 dBFS are speech, and a speech
/// decision is held for three extra frames after the energy drops.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyVad {
    pub threshold_dbfs: f64,
    pub frame_s: f64,
    pub hangover_frames: usize,
}

impl Default for EnergyVad {
    fn default() -> Self {
        Self { threshold_dbfs: -40.0, frame_s: 0.030, hangover_frames: 3 }
    }
}

impl EnergyVad {
    pub fn detect(&self, signal: &[f64], sample_rate: f64) -> VaTrack {
        let frame_len = libm::round(self.frame_s * sample_rate).max(1.0) as usize;
        let mut segments: Vec<(f64, f64)> = Vec::new();
        let mut hang = 0usize;
        for (i, frame) in signal.chunks(frame_len).enumerate() {
            let power = frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64;
            let db = 10.0 * libm::log10(power.max(1e-30));
            let speech = if db > self.threshold_dbfs {
                hang = self.hangover_frames;
                true
            } else if hang > 0 {
                hang -= 1;
                true
            } else {
                false
            };
            if speech {
                let on = (i * frame_len) as f64 / sample_rate;
                let off = ((i * frame_len + frame.len()) as f64 / sample_rate).min(signal.len() as f64 / sample_rate);
                match segments.last_mut() {
                    Some(last) if (last.1 - on).abs() < 1e-12 => last.1 = off,
                    _ => segments.push((on, off)),
                }
            }
        }
        VaTrack { segments, source: VaSource::Vad }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LocationSource {
    Gt,
    Asc,
    AscScreened,
    TalkNet,
}

/// One cell of the `[Location]-[VA]` supervision matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SupervisionConfig {
    pub location: LocationSource,
    pub va: VaSource,
}

impl SupervisionConfig {
    pub const ALL: [SupervisionConfig; 8] = {
        use LocationSource as L;
        use VaSource as V;
        [
            SupervisionConfig { location: L::Gt, va: V::Gt },
            SupervisionConfig { location: L::Gt, va: V::Vad },
            SupervisionConfig { location: L::AscScreened, va: V::Gt },
            SupervisionConfig { location: L::AscScreened, va: V::Vad },
            SupervisionConfig { location: L::Asc, va: V::Gt },
            SupervisionConfig { location: L::Asc, va: V::Vad },
            SupervisionConfig { location: L::TalkNet, va: V::Gt },
            SupervisionConfig { location: L::TalkNet, va: V::Vad },
        ]
    };

    pub fn name(&self) -> String {
        let loc = match self.location {
            LocationSource::Gt => "Gt",
            LocationSource::Asc => "Asc",
            LocationSource::AscScreened => "Asc(s)",
            LocationSource::TalkNet => "TalkNet",
        };
        let va = match self.va {
            VaSource::Gt => "Gt",
            VaSource::Vad => "Vad",
        };
        format!("{loc}-{va}")
    }

    pub fn valid_names() -> String {
        let names: Vec<String> = Self::ALL.iter().map(|c| c.name()).collect();
        names.join(", ")
    }
}

impl fmt::Display for SupervisionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for SupervisionConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|c| c.name().to_ascii_lowercase() == wanted)
            .ok_or_else(|| Error::config(format!("unknown supervision {s:?}; valid names: {}", Self::valid_names())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetFrame {
    pub x_hat: Option<f64>,
    pub c_hat: bool,
    pub mask: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingTarget {
    pub view: usize,
    pub frames: Vec<TargetFrame>,
}

impl TrainingTarget {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Sub-target for frames `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> TrainingTarget {
        TrainingTarget { view: self.view, frames: self.frames[start..start + len].to_vec() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MaskPolicy {
    /// Regression only where voice activity and a detection coincide.
    #[default]
    VaGated,
    /// Ablation: every detection is regressed, including those on silent
    /// frames.
    Bypass,
}

/// Per-frame fusion: `mask = va AND detected`, `x_hat` from the detection
/// when masked, `c_hat = va`.
pub fn fuse(detections: &[Option<f64>], va: &[bool], view: usize, policy: MaskPolicy) -> Result<TrainingTarget> {
    if detections.len() != va.len() {
        return Err(Error::size(format!("{} location frames vs {} VA frames", detections.len(), va.len())));
    }
    let frames = detections
        .iter()
        .zip(va)
        .map(|(&det, &active)| {
            let mask = match policy {
                MaskPolicy::VaGated => active && det.is_some(),
                MaskPolicy::Bypass => det.is_some(),
            };
            TargetFrame { x_hat: if mask { det } else { None }, c_hat: active, mask }
        })
        .collect();
    Ok(TrainingTarget { view, frames })
}

/// Removes detections on frames where the reference track is inactive.
pub fn screen_false_positives(track: &LabelTrack, gt: &LabelTrack) -> Result<LabelTrack> {
    if track.frames.len() != gt.frames.len() {
        return Err(Error::size(format!("{} track frames vs {} reference frames", track.frames.len(), gt.frames.len())));
    }
    let frames = track
        .frames
        .iter()
        .zip(&gt.frames)
        .map(|(f, g)| {
            if f.frame != g.frame || f.view != g.view {
                return Err(Error::size(format!("frame {} view {} misaligned with reference", f.frame, f.view)));
            }
            Ok(if f.active && !g.active { LabelFrame { active: false, x_norm: None, ..*f } } else { *f })
        })
        .collect::<Result<_>>()?;
    Ok(LabelTrack { frame_rate: track.frame_rate, frames })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TeacherQuality {
    Strong,
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TeacherParams {
    /// Long-run fraction of active frames lost to occlusion.
    pub occlusion_fraction: f64,
    /// Mean length of an occlusion burst in frames.
    pub occlusion_burst_frames: f64,
    pub jitter_sigma: f64,
    /// Weak teachers only: probability of a detection on a silent frame.
    pub false_positive_rate: f64,
    /// Fallback distractor position when the scene has no silent actor.
    pub default_distractor_x: f64,
}

impl Default for TeacherParams {
    fn default() -> Self {
        Self {
            occlusion_fraction: 0.15,
            occlusion_burst_frames: 10.0,
            jitter_sigma: 0.005,
            false_positive_rate: 0.20,
            default_distractor_x: 0.3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorruptionLog {
    /// Indices into the track of active GT frames whose detection was dropped.
    pub occluded: Vec<usize>,
    /// Indices of silent GT frames that received a detection.
    pub false_positives: Vec<usize>,
}

/// Synthetic teacher built by corrupting a ground-truth track.
///
/// Strong: occlusion bursts drop detections and the rest get Gaussian
/// jitter. Weak: additionally fires on silent frames at the distractor
/// position (`distractor_x[i]` for record `i`).
pub fn synth_teacher(
    gt: &LabelTrack,
    distractor_x: Option<&[f64]>,
    quality: TeacherQuality,
    params: &TeacherParams,
    rng_seed: u64,
) -> Result<(LabelTrack, CorruptionLog)> {
    if let Some(d) = distractor_x {
        if d.len() != gt.frames.len() {
            return Err(Error::size("distractor positions must align with the GT track"));
        }
    }
    let mut rng = rng::stream(rng_seed, 0x7eac);
    let sigma = params.jitter_sigma.max(0.0);
    if !sigma.is_finite() {
        return Err(Error::config("invalid jitter sigma"));
    }
    let p = params.occlusion_fraction.clamp(0.0, 0.99);
    let burst = params.occlusion_burst_frames.max(1.0);
    let p_exit = 1.0 / burst;
    let p_enter = if p > 0.0 { (p * p_exit / (1.0 - p)).min(1.0) } else { 0.0 };
    let mut occluded = rng.random::<f64>() < p;
    let mut log = CorruptionLog::default();
    let mut frames = Vec::with_capacity(gt.frames.len());
    for (i, g) in gt.frames.iter().enumerate() {
        occluded = if occluded { rng.random::<f64>() >= p_exit } else { rng.random::<f64>() < p_enter };
        let noise = sigma * rng::standard_normal(&mut rng);
        let fp_draw: f64 = rng.random();
        let out = match g.detection() {
            Some(_) if occluded => {
                log.occluded.push(i);
                LabelFrame { active: false, x_norm: None, confidence: Some(0.0), ..*g }
            }
            Some(x) => LabelFrame { active: true, x_norm: Some((x + noise).clamp(0.0, 1.0)), confidence: Some(1.0), ..*g },
            None if quality == TeacherQuality::Weak && !g.active && fp_draw < params.false_positive_rate => {
                log.false_positives.push(i);
                let x = distractor_x.map_or(params.default_distractor_x, |d| d[i]);
                LabelFrame { active: true, x_norm: Some((x + noise).clamp(0.0, 1.0)), confidence: Some(1.0), ..*g }
            }
            None => LabelFrame { active: false, x_norm: None, confidence: Some(0.0), ..*g },
        };
        frames.push(out);
    }
    Ok((LabelTrack { frame_rate: gt.frame_rate, frames }, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(frame: u32, l: f64, r: f64) -> TeacherRecord {
        TeacherRecord { frame, view: 0, active: true, x_left_px: Some(l), x_right_px: Some(r), confidence: Some(0.9) }
    }

    #[test]
    fn centered_box_normalizes_to_half() {
        let t = ingest_teacher_records(&[rec(0, 1100.0, 1348.0)], 2448.0, 30.0).unwrap();
        assert_eq!(t.track.frames[0].x_norm, Some(0.5));
        assert_eq!(t.rejected, 0);
    }

    #[test]
    fn fifth_percentile_actor_position() {
        let t = ingest_teacher_records(&[rec(0, 500.0, 556.0)], 2448.0, 30.0).unwrap();
        assert!((t.track.frames[0].x_norm.unwrap() - 0.2157).abs() < 1e-4);
    }

    #[test]
    fn empty_and_out_of_image_records() {
        let t = ingest_teacher_records(&[], 2448.0, 30.0).unwrap();
        assert!(t.track.frames.is_empty());
        assert_eq!(t.track.detections(0, 0, 5), vec![None; 5]);
        let t = ingest_teacher_records(&[rec(0, 2500.0, 2600.0), rec(1, 10.0, 20.0)], 2448.0, 30.0).unwrap();
        assert_eq!(t.rejected, 1);
        assert_eq!(t.track.frames.len(), 1);
    }

    #[test]
    fn rasterization_examples() {
        let none = VaTrack::new(vec![], VaSource::Gt).unwrap();
        assert_eq!(rasterize_va(&none, 30.0, 60), vec![false; 60]);
        let all = VaTrack::new(vec![(0.0, 2.0)], VaSource::Gt).unwrap();
        assert_eq!(rasterize_va(&all, 30.0, 60), vec![true; 60]);
        let half = VaTrack::new(vec![(0.5, 1.0)], VaSource::Gt).unwrap();
        let r = rasterize_va(&half, 30.0, 60);
        let active: Vec<usize> = r.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect();
        assert_eq!(active, (15..30).collect::<Vec<_>>());
    }

    #[test]
    fn fusion_examples() {
        let t = fuse(&[Some(0.7), None, Some(0.4)], &[true, true, false], 0, MaskPolicy::VaGated).unwrap();
        assert_eq!(t.frames[0], TargetFrame { x_hat: Some(0.7), c_hat: true, mask: true });
        assert_eq!(t.frames[1], TargetFrame { x_hat: None, c_hat: true, mask: false });
        assert_eq!(t.frames[2], TargetFrame { x_hat: None, c_hat: false, mask: false });
        let b = fuse(&[Some(0.4)], &[false], 0, MaskPolicy::Bypass).unwrap();
        assert_eq!(b.frames[0], TargetFrame { x_hat: Some(0.4), c_hat: false, mask: true });
        assert!(fuse(&[None], &[true, false], 0, MaskPolicy::VaGated).is_err());
    }

    #[test]
    fn supervision_names_round_trip() {
        for c in SupervisionConfig::ALL {
            assert_eq!(c.name().parse::<SupervisionConfig>().unwrap(), c);
        }
        assert_eq!("talknet-vad".parse::<SupervisionConfig>().unwrap().location, LocationSource::TalkNet);
        let err = "Foo-Gt".parse::<SupervisionConfig>().unwrap_err();
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("Asc(s)-Vad") && msg.contains("TalkNet-Gt"));
    }

    fn gt_track(active: &[bool]) -> LabelTrack {
        let det: Vec<Option<f64>> = active.iter().enumerate().map(|(i, &a)| a.then_some(0.4 + 0.0001 * i as f64)).collect();
        LabelTrack::from_detections(0, &det)
    }

    #[test]
    fn screening_removes_silent_detections() {
        let gt = gt_track(&[true, false, true]);
        let teacher = LabelTrack::from_detections(0, &[Some(0.4), Some(0.8), None]);
        let s = screen_false_positives(&teacher, &gt).unwrap();
        assert_eq!(s.detections(0, 0, 3), vec![Some(0.4), None, None]);
        assert_eq!(screen_false_positives(&gt, &gt).unwrap(), gt);
    }

    #[test]
    fn strong_teacher_without_corruption_is_gt() {
        let gt = gt_track(&[true, true, false, true]);
        let params = TeacherParams { occlusion_fraction: 0.0, jitter_sigma: 0.0, ..TeacherParams::default() };
        let (t, log) = synth_teacher(&gt, None, TeacherQuality::Strong, &params, 1).unwrap();
        assert_eq!(t.detections(0, 0, 4), gt.detections(0, 0, 4));
        assert!(log.occluded.is_empty() && log.false_positives.is_empty());
    }

    #[test]
    fn weak_teacher_on_silence_only_fires_false_positives() {
        let gt = gt_track(&[false; 200]);
        let (t, log) = synth_teacher(&gt, None, TeacherQuality::Weak, &TeacherParams::default(), 4).unwrap();
        assert_eq!(t.active_count(), log.false_positives.len());
        assert!(t.active_count() > 0);
    }

    #[test]
    fn injected_false_positives_are_screened() {
        let active: Vec<bool> = (0..600).map(|i| (i / 50) % 2 == 0).collect();
        let gt = gt_track(&active);
        let params = TeacherParams { occlusion_fraction: 0.0, false_positive_rate: 0.10, ..TeacherParams::default() };
        let (t, log) = synth_teacher(&gt, None, TeacherQuality::Weak, &params, 8).unwrap();
        assert!(!log.false_positives.is_empty());
        let tp_before = t.frames.iter().zip(&gt.frames).filter(|(a, g)| a.active && g.active).count();
        let s = screen_false_positives(&t, &gt).unwrap();
        let fp_after = s.frames.iter().zip(&gt.frames).filter(|(a, g)| a.active && !g.active).count();
        let tp_after = s.frames.iter().zip(&gt.frames).filter(|(a, g)| a.active && g.active).count();
        assert_eq!(fp_after, 0);
        assert_eq!(tp_after, tp_before);
        assert_eq!(screen_false_positives(&s, &gt).unwrap(), s);
    }

    #[test]
    fn energy_vad_hangover() {
        let fs = 1000.0;
        let mut x = vec![0.0; 300];
        for v in x.iter_mut().take(90) {
            *v = 0.1;
        }
        let vad = EnergyVad::default().detect(&x, fs);
        // 3 loud 30-sample frames plus 3 hangover frames.
        assert_eq!(vad.segments.len(), 1);
        assert!((vad.segments[0].0).abs() < 1e-12);
        assert!((vad.segments[0].1 - 0.18).abs() < 1e-12);
    }
}
