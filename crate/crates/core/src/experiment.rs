//! In-memory synthetic experiments: build a train/test split of random
//! scenes, extract features once per (feature kind, SNR), then train and
//! evaluate students under a given model variant and supervision.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eval::{evaluate, frames_from_predictions, EvalConfig, EvalFrame, MetricsReport, ToleranceSpec};
use crate::features::{apply_normalization, extract, fit_normalization, FeatureKind, FeatureTensor, NormStats, StftConfig};
use crate::geometry::{ArrayGeometry, CameraModel};
use crate::model::{infer_predictions, train_with, CrnnConfig, CrnnParams, EpochRecord, Prediction, Sample, TrainConfig, TrainHistory, Variant};
use crate::rng;
use crate::sim::SceneSpec;
use crate::supervision::{
    fuse, rasterize_va, screen_false_positives, synth_teacher, CorruptionLog, EnergyVad, LabelTrack, LocationSource, MaskPolicy, SupervisionConfig,
    TeacherParams, TeacherQuality, VaSource,
};
use crate::synthetic::{chunk_starts, distractor_track, gt_track, random_scene, render, SceneParams};

/// Output frames per second of chunk hop (1 s at 30 fps).
pub const HOP_FRAMES: usize = 30;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub train_duration_s: f64,
    pub test_duration_s: f64,
    pub scene: SceneParams,
    pub seed: u64,
}

impl Default for SplitConfig {
    /// Eight 6 s training scenes (40 chunks at a 1 s hop) and five 4 s test
    /// scenes (ten non-overlapping 2 s chunks' worth of frames).
    fn default() -> Self {
        Self { n_train: 8, n_test: 5, train_duration_s: 6.0, test_duration_s: 4.0, scene: SceneParams::default(), seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub name: String,
    pub spec: SceneSpec,
    pub camera: CameraModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<SceneRecord>,
    pub test: Vec<SceneRecord>,
}

/// Draws the scenes of a split; views cycle through the default cameras.
pub fn build_split(cfg: &SplitConfig) -> Result<Split> {
    if cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(Error::config("split needs at least one training and one test scene"));
    }
    let views = CameraModel::default_views();
    let make = |prefix: &str, n: usize, duration: f64, stream: u64| -> Result<Vec<SceneRecord>> {
        (0..n)
            .map(|i| {
                let params = SceneParams { duration_s: duration, ..cfg.scene.clone() };
                let spec = random_scene(&params, rng::mix(rng::mix(cfg.seed, stream), i as u64));
                let camera = views[(i * 7 + stream as usize) % views.len()];
                spec.validate(&camera)?;
                Ok(SceneRecord { name: format!("{prefix}{i:03}"), spec, camera })
            })
            .collect()
    };
    Ok(Split {
        train: make("train", cfg.n_train, cfg.train_duration_s, 1)?,
        test: make("test", cfg.n_test, cfg.test_duration_s, 2)?,
    })
}

/// One scene after rendering and feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedScene {
    pub name: String,
    pub view: usize,
    /// Chunk features at a 1 s hop, not yet normalized.
    pub chunks: Vec<FeatureTensor>,
    pub gt: LabelTrack,
    pub distractor: Option<Vec<f64>>,
    /// Energy-VAD activity of the reference microphone, per video frame.
    pub vad: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    pub kind: FeatureKind,
    pub snr_db: Option<f64>,
    pub train: Vec<PreparedScene>,
    pub test: Vec<PreparedScene>,
}

impl PreparedSplit {
    pub fn train_chunks(&self) -> usize {
        self.train.iter().map(|s| s.chunks.len()).sum()
    }
}

pub fn prepare_scene(
    record: &SceneRecord,
    geometry: &ArrayGeometry,
    kind: FeatureKind,
    snr_db: Option<f64>,
    source_rms: f64,
    stft: &StftConfig,
) -> Result<PreparedScene> {
    let spec = SceneSpec { snr_db, ..record.spec.clone() };
    let clip = render(&spec, geometry, source_rms)?;
    let chunks = chunk_starts(clip.n_samples(), stft.chunk_samples, stft.chunk_samples / 2)
        .into_iter()
        .map(|s| extract(kind, &clip.slice(s, stft.chunk_samples)?, geometry, stft))
        .collect::<Result<Vec<_>>>()?;
    let gt = gt_track(&spec, &record.camera)?;
    let vad_track = EnergyVad::default().detect(&clip.channels[0], clip.sample_rate);
    let vad = rasterize_va(&vad_track, gt.frame_rate, gt.frames.len());
    Ok(PreparedScene {
        name: record.name.clone(),
        view: record.camera.view_index,
        chunks,
        gt,
        distractor: distractor_track(&spec, &record.camera)?,
        vad,
    })
}

pub fn prepare_split(split: &Split, geometry: &ArrayGeometry, kind: FeatureKind, snr_db: Option<f64>, scene: &SceneParams) -> Result<PreparedSplit> {
    let stft = StftConfig::default();
    let prep = |r: &SceneRecord| prepare_scene(r, geometry, kind, snr_db, scene.source_rms, &stft);
    Ok(PreparedSplit {
        kind,
        snr_db,
        train: split.train.iter().map(prep).collect::<Result<_>>()?,
        test: split.test.iter().map(prep).collect::<Result<_>>()?,
    })
}

/// How training targets are produced from a scene: a cell of the
/// supervision matrix, the mask policy, and the synthetic teacher settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Supervision {
    pub config: SupervisionConfig,
    pub mask: MaskPolicy,
    pub teacher: TeacherParams,
}

impl Supervision {
    pub fn gt_gt() -> Self {
        Self::new(SupervisionConfig { location: LocationSource::Gt, va: VaSource::Gt })
    }

    pub fn new(config: SupervisionConfig) -> Self {
        Self { config, mask: MaskPolicy::VaGated, teacher: TeacherParams::default() }
    }

    pub fn name(&self) -> String {
        match self.mask {
            MaskPolicy::VaGated => self.config.name(),
            MaskPolicy::Bypass => format!("{}+bypass", self.config.name()),
        }
    }
}

/// Location labels of a scene. On synthetic scenes `TalkNet` stands for the
/// strong teacher, `Asc` for the weak one, and `Asc(s)` for the weak teacher
/// with its false positives screened out against the ground truth.
pub fn location_track(
    source: LocationSource,
    gt: &LabelTrack,
    distractor: Option<&[f64]>,
    params: &TeacherParams,
    seed: u64,
) -> Result<(LabelTrack, CorruptionLog)> {
    match source {
        LocationSource::Gt => Ok((gt.clone(), CorruptionLog::default())),
        LocationSource::TalkNet => synth_teacher(gt, distractor, TeacherQuality::Strong, params, seed),
        LocationSource::Asc => synth_teacher(gt, distractor, TeacherQuality::Weak, params, seed),
        LocationSource::AscScreened => {
            let (t, log) = synth_teacher(gt, distractor, TeacherQuality::Weak, params, seed)?;
            Ok((screen_false_positives(&t, gt)?, log))
        }
    }
}

/// Trunk and head widths applied on top of the variant and input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelWidths {
    pub conv_channels: [usize; 4],
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub fc1_dim: usize,
}

impl ModelWidths {
    pub fn of(config: &CrnnConfig) -> Self {
        Self { conv_channels: config.conv_channels, gru_hidden: config.gru_hidden, gru_layers: config.gru_layers, fc1_dim: config.fc1_dim }
    }

    pub fn apply(&self, config: CrnnConfig) -> CrnnConfig {
        CrnnConfig { conv_channels: self.conv_channels, gru_hidden: self.gru_hidden, gru_layers: self.gru_layers, fc1_dim: self.fc1_dim, ..config }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunConfig {
    pub variant: Variant,
    pub widths: ModelWidths,
    pub supervision: Supervision,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: CrnnConfig,
    pub params: CrnnParams<f32>,
    pub history: TrainHistory,
    pub norm: NormStats,
    pub report_2deg: MetricsReport,
    pub report_5deg: MetricsReport,
    /// Stitched predictions per test scene.
    pub predictions: Vec<Vec<Prediction>>,
    /// Evaluation frames per test scene (2° tolerance pixel units).
    pub frames: Vec<(String, Vec<EvalFrame>)>,
}

/// Per-frame target inputs of one scene: detections and voice activity.
fn scene_labels(scene: &PreparedScene, supervision: &Supervision, seed: u64) -> Result<(Vec<Option<f64>>, Vec<bool>)> {
    let (track, _) = location_track(supervision.config.location, &scene.gt, scene.distractor.as_deref(), &supervision.teacher, seed)?;
    let va = match supervision.config.va {
        VaSource::Gt => scene.gt.frames.iter().map(|f| f.active).collect(),
        VaSource::Vad => scene.vad.clone(),
    };
    Ok((track.frames.iter().map(|f| f.detection()).collect(), va))
}

/// Seed of the synthetic teacher for a scene.
pub fn teacher_seed(train_seed: u64, scene_index: usize) -> u64 {
    rng::mix(rng::mix(train_seed, 0x7ea), scene_index as u64)
}

/// Normalized training windows of a prepared split under a supervision.
pub fn training_samples(split: &PreparedSplit, norm: &NormStats, supervision: &Supervision, seed: u64) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(split.train_chunks());
    for (i, scene) in split.train.iter().enumerate() {
        let (dets, va) = scene_labels(scene, supervision, teacher_seed(seed, i))?;
        let target = fuse(&dets, &va, scene.view, supervision.mask)?;
        let per_chunk = scene.chunks.first().map_or(0, |c| c.frames / crate::model::TRUNK_STRIDE);
        for (k, chunk) in scene.chunks.iter().enumerate() {
            let window = target.window(k * HOP_FRAMES, per_chunk);
            if window.len() != per_chunk {
                return Err(Error::size(format!("{}: labels end before chunk {k}", scene.name)));
            }
            out.push(Sample { features: apply_normalization(chunk, norm)?, view: scene.view, target: window });
        }
    }
    Ok(out)
}

/// Stitched test-scene predictions of a trained student.
pub fn predict_scenes(params: &CrnnParams<f32>, norm: &NormStats, scenes: &[PreparedScene]) -> Result<Vec<Vec<Prediction>>> {
    scenes
        .iter()
        .map(|s| {
            let chunks = s.chunks.iter().map(|c| apply_normalization(c, norm)).collect::<Result<Vec<_>>>()?;
            infer_predictions(params, &chunks, HOP_FRAMES, s.view)
        })
        .collect()
}

/// Trains one student and evaluates it on the test scenes at the 2° and 5°
/// calibrated tolerances.
pub fn run(split: &PreparedSplit, geometry: &ArrayGeometry, cfg: &RunConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<RunResult> {
    let train_tensors: Vec<FeatureTensor> = split.train.iter().flat_map(|s| s.chunks.iter().cloned()).collect();
    let norm = fit_normalization(&train_tensors)?;
    drop(train_tensors);
    let samples = training_samples(split, &norm, &cfg.supervision, cfg.train.seed)?;
    let config = cfg.widths.apply(CrnnConfig::for_features(cfg.variant, split.kind, geometry));
    let outcome = train_with(&samples, &config, &cfg.train, on_epoch)?;
    drop(samples);
    let predictions = predict_scenes(&outcome.params, &norm, &split.test)?;
    let width = CameraModel::default().image_width;
    let frames: Vec<(String, Vec<EvalFrame>)> = split
        .test
        .iter()
        .zip(&predictions)
        .map(|(s, p)| Ok((s.name.clone(), frames_from_predictions(p, &s.gt, width)?)))
        .collect::<Result<_>>()?;
    let report_2deg = evaluate(&frames, &ToleranceSpec::calibrated_2deg(), &cfg.eval)?;
    let report_5deg = evaluate(&frames, &ToleranceSpec::calibrated_5deg(), &cfg.eval)?;
    Ok(RunResult { config, params: outcome.params, history: outcome.history, norm, report_2deg, report_5deg, predictions, frames })
}
