//! Detection and localization metrics.
//!
//! A frame is *positive* when its confidence is `>= threshold`. A positive
//! frame is a true positive when the ground truth is active and the
//! horizontal error is within the pixel tolerance; every other positive is a
//! false positive. Ground-truth active frames that are not positive are
//! false negatives. Precision is `TP / (TP + FP)`, recall `TP / (TP + FN)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::model::Prediction;
use crate::supervision::LabelTrack;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ConversionSource {
    Calibrated,
    Pinhole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ToleranceSpec {
    pub degrees: f64,
    pub pixels: f64,
    pub source: ConversionSource,
}

impl ToleranceSpec {
    pub fn new(degrees: f64, pixels: f64, source: ConversionSource) -> Result<Self> {
        if !(degrees > 0.0 && pixels > 0.0) {
            return Err(Error::config(format!("tolerance needs positive degrees and pixels, got {degrees}°/{pixels}px")));
        }
        Ok(Self { degrees, pixels, source })
    }

    /// ±2° ↔ ±89 px from the calibrated 2448-px camera.
    pub fn calibrated_2deg() -> Self {
        Self { degrees: 2.0, pixels: 89.0, source: ConversionSource::Calibrated }
    }

    /// ±5° ↔ ±222 px.
    pub fn calibrated_5deg() -> Self {
        Self { degrees: 5.0, pixels: 222.0, source: ConversionSource::Calibrated }
    }

    /// Pixel span of `degrees` away from the principal point of `camera`.
    pub fn pinhole(camera: &CameraModel, degrees: f64) -> Self {
        Self { degrees, pixels: camera.pixels_for_degrees(degrees), source: ConversionSource::Pinhole }
    }

    pub fn unbounded() -> Self {
        Self { degrees: f64::INFINITY, pixels: f64::INFINITY, source: ConversionSource::Pinhole }
    }

    pub fn pixels_per_degree(&self) -> f64 {
        match self.source {
            // The calibration constant is the 2° pair for every preset.
            ConversionSource::Calibrated => 89.0 / 2.0,
            ConversionSource::Pinhole => self.pixels / self.degrees,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    PixelsToDegrees,
    DegreesToPixels,
}

/// Linear small-angle conversion at the tolerance's pixels-per-degree ratio.
pub fn px_deg_convert(value: f64, spec: &ToleranceSpec, direction: Direction) -> Result<f64> {
    if !(value >= 0.0) {
        return Err(Error::Domain { what: "conversion input", value });
    }
    let ratio = spec.pixels_per_degree();
    Ok(match direction {
        Direction::PixelsToDegrees => value / ratio,
        Direction::DegreesToPixels => value * ratio,
    })
}

/// `t_j = sigmoid(z_j)` with `z_j` evenly spaced over `[-z_max, z_max]`.
pub fn sigmoid_thresholds(k: usize, z_max: f64) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::config("need at least two thresholds"));
    }
    Ok((0..k)
        .map(|j| {
            let z = -z_max + 2.0 * z_max * j as f64 / (k - 1) as f64;
            1.0 / (1.0 + libm::exp(-z))
        })
        .collect())
}

/// One aligned evaluation frame, positions in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalFrame {
    pub confidence: f64,
    pub x_pred: Option<f64>,
    pub gt_active: bool,
    pub gt_x: Option<f64>,
}

/// Aligns a prediction track with a ground-truth track (same frames and
/// views, in order). Predictions without a confidence use `1` for active
/// frames and `0` otherwise.
pub fn align_tracks(pred: &LabelTrack, gt: &LabelTrack, image_width: f64) -> Result<Vec<EvalFrame>> {
    if pred.frames.len() != gt.frames.len() {
        return Err(Error::size(format!("{} predicted frames vs {} ground-truth frames", pred.frames.len(), gt.frames.len())));
    }
    pred.frames
        .iter()
        .zip(&gt.frames)
        .map(|(p, g)| {
            if p.frame != g.frame || p.view != g.view {
                return Err(Error::size(format!("prediction frame {}/{} misaligned with ground truth {}/{}", p.frame, p.view, g.frame, g.view)));
            }
            let confidence = p.confidence.unwrap_or(if p.active { 1.0 } else { 0.0 });
            Ok(EvalFrame {
                confidence,
                x_pred: p.x_norm.map(|x| x * image_width),
                gt_active: g.active,
                gt_x: g.detection().map(|x| x * image_width),
            })
        })
        .collect()
}

/// Aligns raw per-frame predictions (frame `i` is video frame `i`) with a
/// ground-truth track of the same length.
pub fn frames_from_predictions(pred: &[Prediction], gt: &LabelTrack, image_width: f64) -> Result<Vec<EvalFrame>> {
    if pred.len() != gt.frames.len() {
        return Err(Error::size(format!("{} predictions vs {} ground-truth frames", pred.len(), gt.frames.len())));
    }
    Ok(pred
        .iter()
        .zip(&gt.frames)
        .map(|(p, g)| EvalFrame {
            confidence: p.confidence,
            x_pred: Some(p.x * image_width),
            gt_active: g.active,
            gt_x: g.detection().map(|x| x * image_width),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> f64 {
        let d = self.tp + self.fn_;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }
}

fn localized(f: &EvalFrame, tol_px: f64) -> bool {
    match (f.x_pred, f.gt_x) {
        (Some(p), Some(g)) => (p - g).abs() <= tol_px,
        _ => false,
    }
}

pub fn classify_frames(frames: &[EvalFrame], threshold: f64, tol: &ToleranceSpec) -> Counts {
    let mut c = Counts::default();
    for f in frames {
        let positive = f.confidence >= threshold;
        match (positive, f.gt_active) {
            (true, true) if localized(f, tol.pixels) => c.tp += 1,
            (true, _) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrPoint {
    pub threshold: f64,
    /// `None` when the threshold yields no positives.
    pub precision: Option<f64>,
    pub recall: f64,
}

/// Pascal VOC area under the monotone precision envelope: the precision at
/// recall `r` is the maximum precision at any recall `r' >= r`, integrated
/// over the recall steps starting at 0.
pub fn average_precision(points: &[PrPoint]) -> f64 {
    let mut pr: Vec<(f64, f64)> = points.iter().filter_map(|p| p.precision.map(|prec| (p.recall, prec))).collect();
    if pr.is_empty() {
        return 0.0;
    }
    pr.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
    let envelope = precision_envelope(&pr);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in envelope {
        if r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = r;
        }
    }
    ap
}

/// Precision envelope over `(recall, precision)` pairs sorted by recall.
pub fn precision_envelope(sorted: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = sorted.to_vec();
    let mut running = 0.0f64;
    for v in out.iter_mut().rev() {
        running = running.max(v.1);
        v.1 = running;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AdOperatingPoint {
    #[default]
    BestF1,
    Half,
}

/// Which frames the average distance is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AdScope {
    /// Positive frames with active ground truth, regardless of tolerance.
    #[default]
    Detections,
    /// True positives only (within tolerance).
    Localized,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalConfig {
    pub n_thresholds: usize,
    pub z_max: f64,
    pub ad_operating_point: AdOperatingPoint,
    pub ad_scope: AdScope,
    pub det_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_thresholds: 101, z_max: 8.0, ad_operating_point: AdOperatingPoint::BestF1, ad_scope: AdScope::Detections, det_threshold: 0.5 }
    }
}

pub fn pr_curve(frames: &[EvalFrame], thresholds: &[f64], tol: &ToleranceSpec) -> Vec<PrPoint> {
    thresholds
        .iter()
        .map(|&t| {
            let c = classify_frames(frames, t, tol);
            PrPoint { threshold: t, precision: c.precision(), recall: c.recall() }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub f1_best: f64,
    pub f1_threshold: f64,
    pub precision_at_best: f64,
    pub recall_at_best: f64,
    pub ad_pixels: Option<f64>,
    pub det_err: f64,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Best F1 over `points` (first maximum in threshold order), the average
/// distance at the configured operating point and the detection error.
pub fn summary_metrics(frames: &[EvalFrame], points: &[PrPoint], tol: &ToleranceSpec, cfg: &EvalConfig) -> Summary {
    let mut best = (0.0, cfg.det_threshold, 0.0, 0.0);
    for p in points {
        if let Some(prec) = p.precision {
            let score = f1(prec, p.recall);
            if score > best.0 {
                best = (score, p.threshold, prec, p.recall);
            }
        }
    }
    let ad_threshold = match cfg.ad_operating_point {
        AdOperatingPoint::BestF1 => best.1,
        AdOperatingPoint::Half => 0.5,
    };
    Summary {
        f1_best: best.0,
        f1_threshold: best.1,
        precision_at_best: best.2,
        recall_at_best: best.3,
        ad_pixels: average_distance(frames, ad_threshold, tol, cfg.ad_scope),
        det_err: detection_error(frames, cfg.det_threshold),
    }
}

pub fn average_distance(frames: &[EvalFrame], threshold: f64, tol: &ToleranceSpec, scope: AdScope) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for f in frames {
        if f.confidence < threshold || !f.gt_active {
            continue;
        }
        if let (Some(p), Some(g)) = (f.x_pred, f.gt_x) {
            let d = (p - g).abs();
            if scope == AdScope::Detections || d <= tol.pixels {
                sum += d;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Fraction of frames whose active/silent decision at `threshold` disagrees
/// with the ground truth, positions ignored.
pub fn detection_error(frames: &[EvalFrame], threshold: f64) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    let wrong = frames.iter().filter(|f| (f.confidence >= threshold) != f.gt_active).count();
    wrong as f64 / frames.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SequenceMetrics {
    pub id: String,
    pub n_frames: usize,
    pub ap: Option<f64>,
    pub f1_best: f64,
    pub ad_pixels: Option<f64>,
    pub det_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub tolerance: ToleranceSpec,
    pub pr_points: Vec<PrPoint>,
    pub ap: f64,
    pub f1_best: f64,
    pub f1_threshold: f64,
    pub precision_at_best: f64,
    pub recall_at_best: f64,
    pub ad_pixels: Option<f64>,
    pub ad_degrees: Option<f64>,
    pub det_err: f64,
    pub n_frames: usize,
    pub per_sequence: Vec<SequenceMetrics>,
}

/// PR curve and AP for one frame set; fails when no frame is GT-active.
pub fn pr_curve_and_ap(frames: &[EvalFrame], thresholds: &[f64], tol: &ToleranceSpec) -> Result<(Vec<PrPoint>, f64)> {
    if !frames.iter().any(|f| f.gt_active) {
        return Err(Error::Undefined("AP needs at least one ground-truth active frame".into()));
    }
    let points = pr_curve(frames, thresholds, tol);
    let ap = average_precision(&points);
    Ok((points, ap))
}

/// Full report over pooled sequences with a per-sequence breakdown.
pub fn evaluate(sequences: &[(String, Vec<EvalFrame>)], tol: &ToleranceSpec, cfg: &EvalConfig) -> Result<MetricsReport> {
    let thresholds = sigmoid_thresholds(cfg.n_thresholds, cfg.z_max)?;
    let pooled: Vec<EvalFrame> = sequences.iter().flat_map(|(_, f)| f.iter().copied()).collect();
    let (pr_points, ap) = pr_curve_and_ap(&pooled, &thresholds, tol)?;
    let s = summary_metrics(&pooled, &pr_points, tol, cfg);
    let per_sequence = sequences
        .iter()
        .map(|(id, frames)| {
            let (points, seq_ap) = match pr_curve_and_ap(frames, &thresholds, tol) {
                Ok((p, a)) => (p, Some(a)),
                Err(_) => (pr_curve(frames, &thresholds, tol), None),
            };
            let ss = summary_metrics(frames, &points, tol, cfg);
            SequenceMetrics { id: id.clone(), n_frames: frames.len(), ap: seq_ap, f1_best: ss.f1_best, ad_pixels: ss.ad_pixels, det_err: ss.det_err }
        })
        .collect();
    let ad_degrees = s.ad_pixels.map(|px| px / tol.pixels_per_degree());
    Ok(MetricsReport {
        tolerance: *tol,
        pr_points,
        ap,
        f1_best: s.f1_best,
        f1_threshold: s.f1_threshold,
        precision_at_best: s.precision_at_best,
        recall_at_best: s.recall_at_best,
        ad_pixels: s.ad_pixels,
        ad_degrees,
        det_err: s.det_err,
        n_frames: pooled.len(),
        per_sequence,
    })
}
