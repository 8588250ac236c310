//! File-based pipeline stages. Every stage writes its outputs atomically and
//! records a manifest of the files it read and wrote.
//!
//! Output tree, relative to the output root:
//!
//! ```text
//! scenes/split.json, scenes/<scene>.json     simulate
//! audio/<scene>.wav                          simulate (clean)
//! labels/gt/<scene>.csv, labels/va/<scene>.csv
//! features/<snr>/<kind>/{index.json,norm.json,<scene>_<k>.feat}
//! vad/<snr>/<scene>.csv                      features
//! targets/<snr>/<supervision>/s<seed>/<scene>.{json,csv}
//! runs/<snr>/<run>/{model.ckpt,curve.csv}    train
//! runs/<snr>/<run>/eval/...                  eval
//! manifests/<stage>-<key>.json
//! report.json, report.md                     report
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use asdl_core::eval::{evaluate, frames_from_predictions, EvalFrame, MetricsReport};
use asdl_core::experiment::{teacher_seed, SceneRecord, HOP_FRAMES};
use asdl_core::features::{apply_normalization, extract, fit_normalization};
use asdl_core::model::{infer_predictions, predictions_to_track, train_with, Sample, TRUNK_STRIDE};
use asdl_core::rng;
use asdl_core::sim::add_pink_noise;
use asdl_core::supervision::{fuse, rasterize_va, EnergyVad, LocationSource, SupervisionConfig, VaSource, VaTrack, FRAME_RATE};
use asdl_core::synthetic::{chunk_starts, distractor_track, gt_track, render};
use asdl_core::{CameraModel, FeatureKind, FeatureTensor, LabelTrack, SceneSpec, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, info_span, warn};

use crate::config::{ExperimentConfig, Snr};
use crate::error::{AppError, Result};
use crate::io::features::{ChunkEntry, FeatureIndex, SplitKind};
use crate::io::{self, checkpoint, labels, report, wav};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output root, or absolute for files outside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub key: String,
    pub config_hash: String,
    /// Hash of every setting the outputs depend on; equal fingerprints allow
    /// a stage to be skipped.
    pub fingerprint: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub name: String,
    pub split: SplitKind,
    pub camera: CameraModel,
    pub spec: SceneSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSummary {
    pub degrees: f64,
    pub pixels: f64,
    pub ap: f64,
    pub f1_best: f64,
    pub f1_threshold: f64,
    pub ad_pixels: Option<f64>,
    pub ad_degrees: Option<f64>,
    pub det_err: f64,
    pub n_frames: usize,
}

impl ToleranceSummary {
    fn of(r: &MetricsReport) -> Self {
        Self {
            degrees: r.tolerance.degrees,
            pixels: r.tolerance.pixels,
            ap: r.ap,
            f1_best: r.f1_best,
            f1_threshold: r.f1_threshold,
            ad_pixels: r.ad_pixels,
            ad_degrees: r.ad_degrees,
            det_err: r.det_err,
            n_frames: r.n_frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub snr: Snr,
    pub features: String,
    pub variant: String,
    pub supervision: String,
    pub seed: u64,
    pub final_loss: Option<f64>,
    pub metrics: Vec<ToleranceSummary>,
}

/// One trained configuration: feature kind, variant and supervision under
/// one noise condition and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub snr: Snr,
    pub kind: FeatureKind,
    pub variant: Variant,
    pub supervision: SupervisionConfig,
    pub seed: u64,
}

/// Replaces characters that are awkward in file names.
pub fn sanitize(s: &str) -> String {
    s.chars()
        .filter(|c| *c != ')')
        .map(|c| if c.is_ascii_alphanumeric() || "-+.".contains(c) { c } else { '_' })
        .collect()
}

fn fingerprint<T: Serialize>(parts: &T) -> String {
    io::sha256_hex(&serde_json::to_vec(parts).expect("fingerprint parts serialize"))
}

struct Recorder<'a> {
    root: &'a Path,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

impl<'a> Recorder<'a> {
    fn new(root: &'a Path) -> Self {
        Self { root, inputs: Vec::new(), outputs: Vec::new() }
    }

    fn record(&self, path: &Path) -> Result<FileRecord> {
        let rel = path.strip_prefix(self.root).unwrap_or(path);
        Ok(FileRecord { path: rel.to_string_lossy().replace('\\', "/"), sha256: io::sha256_file(path)? })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let r = self.record(path)?;
        self.inputs.push(r);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        let r = self.record(path)?;
        self.outputs.push(r);
        Ok(())
    }
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    /// Re-run stages whose manifests are up to date.
    pub force: bool,
    pool: rayon::ThreadPool,
    hash: String,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| AppError::Config(e.to_string()))?;
        let hash = cfg.short_hash();
        Ok(Self { out: cfg.paths.output.clone(), cfg, force: false, pool, hash })
    }

    /// Same output tree and thread pool, different configuration.
    pub fn with_config(&self, cfg: ExperimentConfig) -> Self {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(self.pool.current_num_threads()).build().expect("thread pool");
        Self { hash: cfg.short_hash(), cfg, out: self.out.clone(), force: self.force, pool }
    }

    fn p(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    fn manifest_path(&self, stage: &str, key: &str) -> PathBuf {
        self.p("manifests").join(if key.is_empty() { format!("{stage}.json") } else { format!("{stage}-{key}.json") })
    }

    fn up_to_date(&self, stage: &str, key: &str, fp: &str) -> bool {
        if self.force {
            return false;
        }
        match io::read_json::<Manifest>(&self.manifest_path(stage, key)) {
            Ok(m) => m.fingerprint == fp && m.outputs.iter().all(|o| self.p(&o.path).exists()),
            Err(_) => false,
        }
    }

    fn save_manifest(&self, stage: &str, key: &str, fp: String, seed: Option<u64>, rec: Recorder) -> Result<()> {
        let m = Manifest {
            stage: stage.into(),
            key: key.into(),
            config_hash: self.cfg.hash(),
            fingerprint: fp,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: rec.inputs,
            outputs: rec.outputs,
        };
        io::write_json(&self.manifest_path(stage, key), &m)
    }

    pub fn run_dir(&self, key: &RunKey) -> PathBuf {
        self.p("runs").join(key.snr.tag()).join(self.run_name(key))
    }

    pub fn run_name(&self, key: &RunKey) -> String {
        let sup = self.cfg.supervision(key.supervision).name();
        sanitize(&format!("{}_{}_{}_s{}", key.kind, key.variant, sup, key.seed))
    }

    fn features_dir(&self, snr: Snr, kind: FeatureKind) -> PathBuf {
        self.p("features").join(snr.tag()).join(sanitize(&kind.to_string()))
    }

    fn targets_dir(&self, snr: Snr, sup: SupervisionConfig, seed: u64) -> PathBuf {
        self.p("targets").join(snr.tag()).join(sanitize(&self.cfg.supervision(sup).name())).join(format!("s{seed}"))
    }

    /// Run keys of the configured cell: every SNR and seed.
    pub fn run_keys(&self) -> Vec<RunKey> {
        let c = &self.cfg;
        let mut keys = Vec::new();
        for &snr in &c.noise.snr_db {
            for &seed in &c.seeds {
                keys.push(RunKey { snr, kind: c.features.kind, variant: c.model.variant, supervision: c.supervision.name, seed });
            }
        }
        keys
    }

    fn simulate_fingerprint(&self) -> String {
        let c = &self.cfg;
        fingerprint(&(c.split_config(), c.geometry(), c.cameras()))
    }

    // ---- simulate ---------------------------------------------------------

    pub fn simulate(&self) -> Result<()> {
        let _span = info_span!("simulate", seed = self.cfg.scenes.seed, config = %self.hash).entered();
        let fp = self.simulate_fingerprint();
        if self.up_to_date("simulate", "", &fp) {
            info!("up to date");
            return Ok(());
        }
        let split = self.cfg.split()?;
        let geometry = self.cfg.geometry();
        let width = self.cfg.camera.image_width;
        let rms = self.cfg.scenes.source_rms;
        let records: Vec<(&SceneRecord, SplitKind)> =
            split.train.iter().map(|r| (r, SplitKind::Train)).chain(split.test.iter().map(|r| (r, SplitKind::Test))).collect();
        let written: Vec<Vec<PathBuf>> = self.pool.install(|| {
            records
                .par_iter()
                .map(|(r, kind)| -> Result<Vec<PathBuf>> {
                    let clip = render(&r.spec, &geometry, rms)?;
                    let files = vec![
                        self.p("scenes").join(format!("{}.json", r.name)),
                        self.p("audio").join(format!("{}.wav", r.name)),
                        self.p("labels/gt").join(format!("{}.csv", r.name)),
                        self.p("labels/va").join(format!("{}.csv", r.name)),
                    ];
                    io::write_json(&files[0], &SceneFile { name: r.name.clone(), split: *kind, camera: r.camera, spec: r.spec.clone() })?;
                    wav::write(&files[1], &clip)?;
                    labels::write_track(&files[2], &gt_track(&r.spec, &r.camera)?, width)?;
                    labels::write_segments(&files[3], &r.spec.voice_segments)?;
                    Ok(files)
                })
                .collect::<Result<_>>()
        })?;
        let split_path = self.p("scenes/split.json");
        io::write_json(&split_path, &SplitFile { train: split.train.iter().map(|r| r.name.clone()).collect(), test: split.test.iter().map(|r| r.name.clone()).collect() })?;
        let mut rec = Recorder::new(&self.out);
        rec.output(&split_path)?;
        for f in written.iter().flatten() {
            rec.output(f)?;
        }
        info!(scenes = records.len(), "rendered clean scenes");
        self.save_manifest("simulate", "", fp, Some(self.cfg.scenes.seed), rec)
    }

    fn split_file(&self) -> Result<SplitFile> {
        let p = self.p("scenes/split.json");
        io::require(&p, "simulated scenes", "simulate")?;
        io::read_json(&p)
    }

    fn scene_file(&self, name: &str) -> Result<SceneFile> {
        let p = self.p("scenes").join(format!("{name}.json"));
        io::require(&p, "scene description", "simulate")?;
        io::read_json(&p)
    }

    // ---- features ---------------------------------------------------------

    fn features_fingerprint(&self, snr: Snr, kind: FeatureKind) -> String {
        fingerprint(&(self.simulate_fingerprint(), snr, kind.to_string(), self.cfg.stft()))
    }

    pub fn features(&self) -> Result<()> {
        for &snr in &self.cfg.noise.snr_db {
            self.features_for(snr, self.cfg.features.kind)?;
        }
        Ok(())
    }

    /// Adds noise at `snr`, extracts 2 s chunks at a 1 s hop, runs the
    /// energy VAD on the noisy reference channel and fits the training-set
    /// normalization.
    pub fn features_for(&self, snr: Snr, kind: FeatureKind) -> Result<()> {
        let key = format!("{}-{}", snr.tag(), sanitize(&kind.to_string()));
        let _span = info_span!("features", %key, config = %self.hash).entered();
        let fp = self.features_fingerprint(snr, kind);
        if self.up_to_date("features", &key, &fp) {
            info!("up to date");
            return Ok(());
        }
        let split = self.split_file()?;
        let geometry = self.cfg.geometry();
        let stft = self.cfg.stft();
        let dir = self.features_dir(snr, kind);
        let scenes: Vec<(String, SplitKind)> =
            split.train.iter().map(|n| (n.clone(), SplitKind::Train)).chain(split.test.iter().map(|n| (n.clone(), SplitKind::Test))).collect();
        type SceneOut = (Vec<ChunkEntry>, Vec<FeatureTensor>, Vec<PathBuf>, Vec<PathBuf>);
        let results: Vec<SceneOut> = self.pool.install(|| {
            scenes
                .par_iter()
                .map(|(name, split_kind)| -> Result<SceneOut> {
                    let scene = self.scene_file(name)?;
                    let wav_path = self.p("audio").join(format!("{name}.wav"));
                    let va_path = self.p("labels/va").join(format!("{name}.csv"));
                    io::require(&wav_path, "clean audio", "simulate")?;
                    let mut clip = wav::read(&wav_path)?;
                    if clip.sample_rate != geometry.sample_rate || clip.n_channels() != geometry.n_mics() {
                        return Err(AppError::format(&wav_path, "sample rate or channel count does not match the array"));
                    }
                    clip.active_segments = labels::read_segments(&va_path)?;
                    if let Some(db) = snr.0 {
                        clip = add_pink_noise(&clip, db, rng::mix(scene.spec.rng_seed, 0x9a1))?;
                    }
                    let vad = EnergyVad::default().detect(&clip.channels[0], clip.sample_rate);
                    let vad_path = self.p("vad").join(snr.tag()).join(format!("{name}.csv"));
                    labels::write_segments(&vad_path, &vad.segments)?;
                    let mut entries = Vec::new();
                    let mut tensors = Vec::new();
                    let mut outputs = vec![vad_path];
                    for (k, start) in chunk_starts(clip.n_samples(), stft.chunk_samples, stft.chunk_samples / 2).into_iter().enumerate() {
                        let t = extract(kind, &clip.slice(start, stft.chunk_samples)?, &geometry, &stft)?;
                        let file = PathBuf::from(format!("{name}_{k:03}.feat"));
                        io::features::write(&dir.join(&file), &t)?;
                        outputs.push(dir.join(&file));
                        entries.push(ChunkEntry { file, scene: name.clone(), chunk: k, start_s: start as f64 / stft.sample_rate, view: scene.camera.view_index, split: *split_kind });
                        if *split_kind == SplitKind::Train {
                            tensors.push(t);
                        }
                    }
                    Ok((entries, tensors, outputs, vec![wav_path, va_path]))
                })
                .collect::<Result<_>>()
        })?;
        let mut rec = Recorder::new(&self.out);
        let mut chunks = Vec::new();
        let mut train_tensors = Vec::new();
        for (entries, tensors, outputs, inputs) in results {
            chunks.extend(entries);
            train_tensors.extend(tensors);
            for f in &inputs {
                rec.input(f)?;
            }
            for f in &outputs {
                rec.output(f)?;
            }
        }
        let first = train_tensors.first().ok_or_else(|| AppError::Config("the training split has no complete chunk".into()))?;
        let index = FeatureIndex { kind, snr, channels: first.channels, frames: first.frames, bins: first.bins, chunks };
        let norm = fit_normalization(&train_tensors)?;
        drop(train_tensors);
        io::write_json(&dir.join("index.json"), &index)?;
        io::write_json(&dir.join("norm.json"), &norm)?;
        rec.output(&dir.join("index.json"))?;
        rec.output(&dir.join("norm.json"))?;
        info!(chunks = index.chunks.len(), "extracted features");
        self.save_manifest("features", &key, fp, None, rec)
    }

    fn feature_index(&self, snr: Snr, kind: FeatureKind) -> Result<FeatureIndex> {
        let p = self.features_dir(snr, kind).join("index.json");
        io::require(&p, &format!("{kind} features at {snr}"), "features")?;
        io::read_json(&p)
    }

    fn load_chunks(&self, snr: Snr, index: &FeatureIndex, scene: &str, rec: Option<&mut Recorder>) -> Result<Vec<FeatureTensor>> {
        let dir = self.features_dir(snr, index.kind);
        let mut out = Vec::new();
        let mut paths = Vec::new();
        for c in index.scene(scene) {
            let p = dir.join(&c.file);
            out.push(io::features::read(&p, &format!("{scene}/{}", c.chunk))?);
            paths.push(p);
        }
        if let Some(rec) = rec {
            for p in paths {
                rec.input(&p)?;
            }
        }
        Ok(out)
    }

    // ---- labels -----------------------------------------------------------

    fn labels_fingerprint(&self, snr: Snr, sup: SupervisionConfig, seed: u64) -> String {
        let c = &self.cfg;
        fingerprint(&(self.simulate_fingerprint(), snr, self.cfg.supervision(sup), seed, &c.paths.teacher_dir, &c.paths.va_dir, c.stft()))
    }

    pub fn labels(&self) -> Result<()> {
        for &snr in &self.cfg.noise.snr_db {
            for &seed in &self.cfg.seeds {
                self.labels_for(snr, self.cfg.supervision.name, seed)?;
            }
        }
        Ok(())
    }

    /// Builds location labels (ground truth, synthetic teacher or an
    /// external teacher file) and voice activity (ground truth, energy VAD or
    /// an external segment file), then fuses them into training targets.
    pub fn labels_for(&self, snr: Snr, sup: SupervisionConfig, seed: u64) -> Result<()> {
        let supervision = self.cfg.supervision(sup);
        let key = format!("{}-{}-s{seed}", snr.tag(), sanitize(&supervision.name()));
        let _span = info_span!("labels", %key, seed, config = %self.hash).entered();
        let fp = self.labels_fingerprint(snr, sup, seed);
        if self.up_to_date("labels", &key, &fp) {
            info!("up to date");
            return Ok(());
        }
        let split = self.split_file()?;
        let width = self.cfg.camera.image_width;
        let dir = self.targets_dir(snr, sup, seed);
        let mut rec = Recorder::new(&self.out);
        let mut rejected = 0;
        for (i, name) in split.train.iter().enumerate() {
            let scene = self.scene_file(name)?;
            let gt_path = self.p("labels/gt").join(format!("{name}.csv"));
            io::require(&gt_path, "ground-truth labels", "simulate")?;
            let gt = labels::read_track(&gt_path, width)?.track;
            rec.input(&gt_path)?;
            let track = match (sup.location, &self.cfg.paths.teacher_dir) {
                (LocationSource::Gt, _) => gt.clone(),
                (_, Some(tdir)) => {
                    let p = tdir.join(format!("{name}.csv"));
                    io::require(&p, "external teacher labels", "labels")?;
                    let ingested = labels::read_track(&p, width)?;
                    rejected += ingested.rejected;
                    rec.input(&p)?;
                    align_to(&ingested.track, gt.frames.len(), scene.camera.view_index)
                }
                (source, None) => {
                    let distractor = distractor_track(&scene.spec, &scene.camera)?;
                    asdl_core::experiment::location_track(source, &gt, distractor.as_deref(), &supervision.teacher, teacher_seed(seed, i))?.0
                }
            };
            let va = match (sup.va, &self.cfg.paths.va_dir) {
                (VaSource::Gt, _) => gt.frames.iter().map(|f| f.active).collect(),
                (VaSource::Vad, dir) => {
                    let p = match dir {
                        Some(d) => d.join(format!("{name}.csv")),
                        None => self.p("vad").join(snr.tag()).join(format!("{name}.csv")),
                    };
                    io::require(&p, "voice-activity segments", "features")?;
                    rec.input(&p)?;
                    let track = VaTrack::new(labels::read_segments(&p)?, VaSource::Vad)?;
                    rasterize_va(&track, FRAME_RATE, gt.frames.len())
                }
            };
            let dets: Vec<Option<f64>> = track.frames.iter().map(|f| f.detection()).collect();
            let target = fuse(&dets, &va, scene.camera.view_index, supervision.mask)?;
            let tp = dir.join(format!("{name}.json"));
            let lp = dir.join(format!("{name}.csv"));
            labels::write_target(&tp, &target)?;
            labels::write_track(&lp, &track, width)?;
            rec.output(&tp)?;
            rec.output(&lp)?;
        }
        if rejected > 0 {
            warn!(rejected, "teacher records with box centers outside the image were dropped");
        }
        info!(scenes = split.train.len(), supervision = %supervision.name(), "fused targets");
        self.save_manifest("labels", &key, fp, Some(seed), rec)
    }

    // ---- train ------------------------------------------------------------

    fn train_fingerprint(&self, key: &RunKey) -> String {
        let c = &self.cfg;
        fingerprint(&(
            self.features_fingerprint(key.snr, key.kind),
            self.labels_fingerprint(key.snr, key.supervision, key.seed),
            c.crnn_config(key.variant, key.kind),
            c.train_config(key.seed),
        ))
    }

    pub fn train(&self) -> Result<()> {
        for key in self.run_keys() {
            self.train_run(&key)?;
        }
        Ok(())
    }

    pub fn train_run(&self, key: &RunKey) -> Result<()> {
        let name = format!("{}-{}", key.snr.tag(), self.run_name(key));
        let _span = info_span!("train", run = %name, seed = key.seed, config = %self.hash).entered();
        let fp = self.train_fingerprint(key);
        if self.up_to_date("train", &name, &fp) {
            info!("up to date");
            return Ok(());
        }
        let index = self.feature_index(key.snr, key.kind)?;
        let fdir = self.features_dir(key.snr, key.kind);
        let norm_path = fdir.join("norm.json");
        let norm: asdl_core::NormStats = io::read_json(&norm_path)?;
        let tdir = self.targets_dir(key.snr, key.supervision, key.seed);
        let mut rec = Recorder::new(&self.out);
        rec.input(&fdir.join("index.json"))?;
        rec.input(&norm_path)?;
        let mut samples = Vec::new();
        for scene in index.scenes(SplitKind::Train) {
            let tp = tdir.join(format!("{scene}.json"));
            io::require(&tp, &format!("training targets for {scene}"), "labels")?;
            let target = labels::read_target(&tp)?;
            rec.input(&tp)?;
            let chunks = self.load_chunks(key.snr, &index, &scene, Some(&mut rec))?;
            let per_chunk = index.frames / TRUNK_STRIDE;
            for (k, c) in chunks.iter().enumerate() {
                if k * HOP_FRAMES + per_chunk > target.len() {
                    return Err(AppError::format(&tp, format!("labels end before chunk {k}")));
                }
                samples.push(Sample { features: apply_normalization(c, &norm)?, view: target.view, target: target.window(k * HOP_FRAMES, per_chunk) });
            }
        }
        let model = self.cfg.crnn_config(key.variant, key.kind);
        let hyper = self.cfg.train_config(key.seed);
        info!(samples = samples.len(), "training");
        let outcome = train_with(&samples, &model, &hyper, |e| info!(epoch = e.epoch, lr = e.lr, loss = e.train_loss, "epoch"))?;
        let dir = self.run_dir(key);
        let ck = checkpoint::Checkpoint {
            config_hash: self.cfg.hash(),
            params: outcome.params,
            norm,
            adam: outcome.optimizer,
            epoch: outcome.history.epochs.len(),
        };
        checkpoint::write(&dir.join("model.ckpt"), &ck)?;
        io::write_atomic(&dir.join("curve.csv"), &report::curve_csv(&outcome.history.epochs)?)?;
        io::write_json(&dir.join("history.json"), &outcome.history)?;
        for f in ["model.ckpt", "curve.csv", "history.json"] {
            rec.output(&dir.join(f))?;
        }
        self.save_manifest("train", &name, fp, Some(key.seed), rec)
    }

    // ---- eval -------------------------------------------------------------

    pub fn eval(&self) -> Result<Vec<RunSummary>> {
        self.run_keys().iter().map(|k| self.eval_run(k)).collect()
    }

    /// Stitched test predictions, scored at every configured tolerance.
    pub fn eval_run(&self, key: &RunKey) -> Result<RunSummary> {
        let name = format!("{}-{}", key.snr.tag(), self.run_name(key));
        let _span = info_span!("eval", run = %name, seed = key.seed, config = %self.hash).entered();
        let dir = self.run_dir(key);
        let ck_path = dir.join("model.ckpt");
        io::require(&ck_path, "trained model", "train")?;
        let ck = checkpoint::read(&ck_path)?;
        if ck.config_hash != self.cfg.hash() {
            warn!("checkpoint was trained under a different configuration hash");
        }
        let mut rec = Recorder::new(&self.out);
        rec.input(&ck_path)?;
        let index = self.feature_index(key.snr, key.kind)?;
        rec.input(&self.features_dir(key.snr, key.kind).join("index.json"))?;
        let width = self.cfg.camera.image_width;
        let test = index.scenes(SplitKind::Test);
        let loaded: Vec<(Vec<FeatureTensor>, LabelTrack, PathBuf)> = test
            .iter()
            .map(|s| {
                let gt_path = self.p("labels/gt").join(format!("{s}.csv"));
                io::require(&gt_path, "ground-truth labels", "simulate")?;
                Ok((self.load_chunks(key.snr, &index, s, Some(&mut rec))?, labels::read_track(&gt_path, width)?.track, gt_path))
            })
            .collect::<Result<_>>()?;
        let preds: Vec<Vec<asdl_core::Prediction>> = self.pool.install(|| {
            loaded
                .par_iter()
                .map(|(chunks, gt, _)| {
                    let norm = chunks.iter().map(|c| apply_normalization(c, &ck.norm)).collect::<asdl_core::Result<Vec<_>>>()?;
                    let view = gt.frames.first().map_or(0, |f| f.view);
                    Ok(infer_predictions(&ck.params, &norm, HOP_FRAMES, view)?)
                })
                .collect::<Result<_>>()
        })?;
        let mut frames: Vec<(String, Vec<EvalFrame>)> = Vec::new();
        for ((s, (_, gt, gt_path)), p) in test.iter().zip(&loaded).zip(&preds) {
            rec.input(gt_path)?;
            frames.push((s.clone(), frames_from_predictions(p, gt, width)?));
        }
        let eval_dir = dir.join("eval");
        let mut metrics = Vec::new();
        let mut best_threshold = None;
        for tol in self.cfg.tolerances() {
            let r = evaluate(&frames, &tol, &self.cfg.eval_config())?;
            let tag = format!("{}deg", tol.degrees);
            report::write_report(&eval_dir, &tag, &name, &r)?;
            for ext in ["json", "csv", "svg"] {
                let f = if ext == "json" { format!("metrics_{tag}.json") } else { format!("pr_{tag}.{ext}") };
                rec.output(&eval_dir.join(f))?;
            }
            best_threshold.get_or_insert(r.f1_threshold);
            info!(tolerance = %tag, ap = r.ap, f1 = r.f1_best, det_err = r.det_err, "evaluated");
            metrics.push(ToleranceSummary::of(&r));
        }
        for ((s, (_, gt, _)), p) in test.iter().zip(&loaded).zip(&preds) {
            let view = gt.frames.first().map_or(0, |f| f.view);
            let track = predictions_to_track(p, view, best_threshold.unwrap_or(0.5));
            let path = eval_dir.join("predictions").join(format!("{s}.csv"));
            labels::write_track(&path, &track, width)?;
            rec.output(&path)?;
        }
        let history: Option<asdl_core::model::TrainHistory> = io::read_json(&dir.join("history.json")).ok();
        let summary = RunSummary {
            run: name.clone(),
            snr: key.snr,
            features: key.kind.to_string(),
            variant: key.variant.to_string(),
            supervision: self.cfg.supervision(key.supervision).name(),
            seed: key.seed,
            final_loss: history.and_then(|h| h.final_loss()),
            metrics,
        };
        io::write_json(&eval_dir.join("summary.json"), &summary)?;
        rec.output(&eval_dir.join("summary.json"))?;
        let fp = fingerprint(&(self.train_fingerprint(key), self.cfg.eval_config(), self.cfg.tolerances()));
        self.save_manifest("eval", &name, fp, Some(key.seed), rec)?;
        Ok(summary)
    }

    // ---- report -----------------------------------------------------------

    /// Checks that every manifest input was produced by some stage (or lies
    /// outside the output tree) and that recorded outputs are unchanged on
    /// disk. Returns the problems found.
    pub fn check_manifests(&self) -> Result<Vec<String>> {
        let dir = self.p("manifests");
        io::require(&dir, "stage manifests", "simulate")?;
        let mut manifests = Vec::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir).map_err(|e| AppError::io(&dir, e))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for p in entries.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
            manifests.push(io::read_json::<Manifest>(&p)?);
        }
        let mut produced: BTreeMap<&str, &str> = BTreeMap::new();
        for m in &manifests {
            for o in &m.outputs {
                produced.insert(&o.path, &o.sha256);
            }
        }
        let mut problems = Vec::new();
        for m in &manifests {
            for i in &m.inputs {
                if Path::new(&i.path).is_absolute() {
                    continue;
                }
                match produced.get(i.path.as_str()) {
                    None => problems.push(format!("{}:{} reads {} which no stage produced", m.stage, m.key, i.path)),
                    Some(sha) if *sha != i.sha256 => problems.push(format!("{}:{} read {} before it was rewritten", m.stage, m.key, i.path)),
                    _ => {}
                }
            }
        }
        for (path, sha) in &produced {
            let full = self.p(path);
            match io::sha256_file(&full) {
                Ok(s) if s == *sha => {}
                Ok(_) => problems.push(format!("{path} changed after it was recorded")),
                Err(_) => problems.push(format!("{path} is missing")),
            }
        }
        Ok(problems)
    }

    /// Collects every evaluated run into `report.json` and `report.md`.
    pub fn report(&self) -> Result<Vec<RunSummary>> {
        let _span = info_span!("report", config = %self.hash).entered();
        let problems = self.check_manifests()?;
        if !problems.is_empty() {
            return Err(AppError::format(self.p("manifests"), format!("manifest closure failed:\n  {}", problems.join("\n  "))));
        }
        let mut summaries = Vec::new();
        let runs = self.p("runs");
        io::require(&runs, "evaluated runs", "eval")?;
        let mut dirs = Vec::new();
        for snr in std::fs::read_dir(&runs).map_err(|e| AppError::io(&runs, e))?.flatten() {
            for run in std::fs::read_dir(snr.path()).map_err(|e| AppError::io(snr.path(), e))?.flatten() {
                dirs.push(run.path());
            }
        }
        dirs.sort();
        for d in dirs {
            let p = d.join("eval/summary.json");
            if p.exists() {
                summaries.push(io::read_json::<RunSummary>(&p)?);
            }
        }
        if summaries.is_empty() {
            return Err(AppError::Missing { what: "evaluated runs".into(), path: runs, stage: "eval" });
        }
        io::write_json(&self.p("report.json"), &summaries)?;
        io::write_atomic(&self.p("report.md"), markdown_table(&summaries).as_bytes())?;
        info!(runs = summaries.len(), "report written");
        Ok(summaries)
    }

    /// All stages in order.
    pub fn run_all(&self) -> Result<Vec<RunSummary>> {
        self.simulate()?;
        self.features()?;
        self.labels()?;
        self.train()?;
        self.eval()?;
        self.report()
    }
}

/// Teacher tracks from files may skip frames; missing frames are inactive.
fn align_to(track: &LabelTrack, n_frames: usize, view: usize) -> LabelTrack {
    let mut frames: Vec<_> = (0..n_frames as u32).map(|i| asdl_core::supervision::LabelFrame::inactive(i, view)).collect();
    for f in &track.frames {
        if (f.frame as usize) < n_frames && f.view == view {
            frames[f.frame as usize] = *f;
        }
    }
    LabelTrack { frame_rate: track.frame_rate, frames }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.digits$}"))
}

/// Mean over seeds of each (SNR, features, variant, supervision) group.
pub fn markdown_table(runs: &[RunSummary]) -> String {
    let mut groups: BTreeMap<(String, String, String, String), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.snr.tag(), r.features.clone(), r.variant.clone(), r.supervision.clone())).or_default().push(r);
    }
    let mut s = String::from("| SNR | features | model | supervision | seeds | tolerance | AP | F1 | aD (px) | aD (deg) | DetErr |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for ((snr, feat, var, sup), rs) in &groups {
        let n_tol = rs[0].metrics.len();
        for t in 0..n_tol {
            let mean = |f: &dyn Fn(&ToleranceSummary) -> Option<f64>| {
                let v: Vec<f64> = rs.iter().filter_map(|r| r.metrics.get(t).and_then(f)).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            s.push_str(&format!(
                "| {snr} | {feat} | {var} | {sup} | {} | {}° | {} | {} | {} | {} | {} |\n",
                rs.len(),
                rs[0].metrics[t].degrees,
                fmt_opt(mean(&|m| Some(m.ap)), 3),
                fmt_opt(mean(&|m| Some(m.f1_best)), 3),
                fmt_opt(mean(&|m| m.ad_pixels), 1),
                fmt_opt(mean(&|m| m.ad_degrees), 2),
                fmt_opt(mean(&|m| Some(m.det_err)), 3),
            ));
        }
    }
    s
}
