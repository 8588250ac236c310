//! Experiment configuration: a TOML file (optionally layered on a `base`
//! preset) plus `ASDL_<SECTION>__<KEY>` environment overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use asdl_core::eval::{AdOperatingPoint, AdScope, ConversionSource, EvalConfig, ToleranceSpec};
use asdl_core::experiment::{ModelWidths, RunConfig, SceneRecord, Split, SplitConfig, Supervision};
use asdl_core::features::{GCC_LAGS, F_IN};
use asdl_core::geometry::N_VIEWS;
use asdl_core::model::{TrainConfig, CHUNK_FRAMES};
use asdl_core::sim::Propagation;
use asdl_core::supervision::{MaskPolicy, SupervisionConfig, TeacherParams};
use asdl_core::synthetic::SceneParams;
use asdl_core::{ArrayGeometry, CameraModel, CrnnConfig, FeatureKind, StftConfig, Variant};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const ENV_PREFIX: &str = "ASDL_";

/// Signal-to-noise ratio of a run; `clean` skips noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr(pub Option<f64>);

impl Snr {
    pub const CLEAN: Snr = Snr(None);

    /// Directory-safe tag: `clean` or `snr20`.
    pub fn tag(&self) -> String {
        match self.0 {
            None => "clean".into(),
            Some(db) if db.fract() == 0.0 => format!("snr{}", db as i64),
            Some(db) => format!("snr{db}"),
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            None => f.write_str("clean"),
            Some(db) => write!(f, "{db} dB"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            None => s.serialize_str("clean"),
            Some(db) => s.serialize_f64(db),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Snr(Some(v))),
            Raw::Int(v) => Ok(Snr(Some(v as f64))),
            Raw::Str(s) if s.eq_ignore_ascii_case("clean") || s.eq_ignore_ascii_case("inf") => Ok(Snr(None)),
            Raw::Str(s) => s.trim_end_matches("dB").trim().parse().map(|v| Snr(Some(v))).map_err(serde::de::Error::custom),
        }
    }
}

/// Serde adapters for types that parse from and print to strings.
mod via_str {
    use super::*;

    pub fn serialize<T: fmt::Display, S: Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T: FromStr, D: Deserializer<'de>>(d: D) -> std::result::Result<T, D::Error>
    where
        T::Err: fmt::Display,
    {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

mod via_str_list {
    use super::*;

    pub fn serialize<T: fmt::Display, S: Serializer>(v: &Option<Vec<T>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(v) => s.collect_seq(v.iter().map(|x| x.to_string())),
        }
    }

    pub fn deserialize<'de, T: FromStr, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<T>>, D::Error>
    where
        T::Err: fmt::Display,
    {
        let raw: Option<Vec<String>> = Option::deserialize(d)?;
        raw.map(|v| v.iter().map(|s| s.parse().map_err(serde::de::Error::custom)).collect()).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub output: PathBuf,
    /// Directory of external teacher label CSVs named `<scene>.csv`; when
    /// absent the synthetic teacher is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher_dir: Option<PathBuf>,
    /// Directory of external VAD segment CSVs named `<scene>.csv`; when
    /// absent the built-in energy VAD is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub va_dir: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self { output: PathBuf::from("runs/default"), teacher_dir: None, va_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub speed_of_sound: f64,
    pub sample_rate: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        let g = ArrayGeometry::default_rig();
        Self { speed_of_sound: g.speed_of_sound, sample_rate: g.sample_rate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub horizontal_fov_deg: f64,
    pub image_width: f64,
    pub n_views: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        let c = CameraModel::default();
        Self { horizontal_fov_deg: c.horizontal_fov_deg, image_width: c.image_width, n_views: N_VIEWS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenesConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub train_duration_s: f64,
    pub test_duration_s: f64,
    pub seed: u64,
    pub max_azimuth_deg: f64,
    pub knot_interval_s: f64,
    pub speech_s: [f64; 2],
    pub silence_s: [f64; 2],
    /// `near-field` (1/r gains, exact path delays) or `far-field`.
    pub propagation: String,
    pub range_m: f64,
    pub distractor: bool,
    pub distractor_gap_deg: f64,
    pub source_rms: f64,
}

impl Default for ScenesConfig {
    fn default() -> Self {
        let s = SplitConfig::default();
        let p = SceneParams::default();
        let range_m = match p.propagation {
            Propagation::NearField { range_m } => range_m,
            Propagation::FarField => 3.5,
        };
        Self {
            n_train: 16,
            n_test: s.n_test,
            train_duration_s: s.train_duration_s,
            test_duration_s: s.test_duration_s,
            seed: s.seed,
            max_azimuth_deg: p.max_azimuth_deg,
            knot_interval_s: p.knot_interval_s,
            speech_s: [p.speech_s.0, p.speech_s.1],
            silence_s: [p.silence_s.0, p.silence_s.1],
            propagation: "near-field".into(),
            range_m,
            distractor: p.distractor,
            distractor_gap_deg: p.distractor_gap_deg,
            source_rms: p.source_rms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    #[serde(with = "via_str")]
    pub kind: FeatureKind,
    pub window_size: usize,
    pub hop: usize,
    pub chunk_s: f64,
    pub mel_bands: usize,
    pub gcc_lags: usize,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        let s = StftConfig::default();
        Self {
            kind: FeatureKind::GccPhat,
            window_size: s.window_size,
            hop: s.hop,
            chunk_s: s.chunk_samples as f64 / s.sample_rate,
            mel_bands: F_IN,
            gcc_lags: GCC_LAGS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(with = "via_str")]
    pub variant: Variant,
    pub conv_channels: [usize; 4],
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub fc1_dim: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let c = CrnnConfig::desk(Variant::Crnn, 16);
        Self {
            variant: c.variant,
            conv_channels: c.conv_channels,
            gru_hidden: c.gru_hidden,
            gru_layers: c.gru_layers,
            fc1_dim: c.fc1_dim,
            bn_momentum: c.bn_momentum,
            bn_eps: c.bn_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisionSection {
    /// Supervision matrix name such as `Gt-Gt` or `TalkNet-Vad`.
    #[serde(with = "via_str")]
    pub name: SupervisionConfig,
    /// `va-gated` or `bypass` (teacher detections kept on silent frames).
    pub mask: String,
    pub occlusion_fraction: f64,
    pub occlusion_burst_frames: f64,
    pub jitter_sigma: f64,
    pub false_positive_rate: f64,
}

impl Default for SupervisionSection {
    fn default() -> Self {
        let t = TeacherParams::default();
        Self {
            name: Supervision::gt_gt().config,
            mask: "va-gated".into(),
            occlusion_fraction: t.occlusion_fraction,
            occlusion_burst_frames: t.occlusion_burst_frames,
            jitter_sigma: t.jitter_sigma,
            false_positive_rate: t.false_positive_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_fixed_epochs: usize,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { epochs: 30, batch_size: 8, lr: 3e-3, lr_fixed_epochs: 15, lr_decay: t.lr_decay, beta1: t.beta1, beta2: t.beta2, adam_eps: t.adam_eps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceEntry {
    pub degrees: f64,
    pub pixels: f64,
    pub source: ConversionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub tolerances: Vec<ToleranceEntry>,
    pub n_thresholds: usize,
    pub z_max: f64,
    pub ad_operating_point: AdOperatingPoint,
    pub ad_scope: AdScope,
    pub det_threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        let entry = |t: ToleranceSpec| ToleranceEntry { degrees: t.degrees, pixels: t.pixels, source: t.source };
        Self {
            tolerances: vec![entry(ToleranceSpec::calibrated_2deg()), entry(ToleranceSpec::calibrated_5deg())],
            n_thresholds: e.n_thresholds,
            z_max: e.z_max,
            ad_operating_point: e.ad_operating_point,
            ad_scope: e.ad_scope,
            det_threshold: e.det_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub snr_db: Vec<Snr>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { snr_db: vec![Snr::CLEAN] }
    }
}

/// Axes of an ablation sweep; an absent axis takes the single value of the
/// main configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    #[serde(with = "via_str_list", skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<FeatureKind>>,
    #[serde(with = "via_str_list", skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<Variant>>,
    #[serde(with = "via_str_list", skip_serializing_if = "Option::is_none")]
    pub supervision: Option<Vec<SupervisionConfig>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<Snr>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Seeds of the training runs; the scene split has its own seed.
    pub seeds: Vec<u64>,
    pub paths: PathsConfig,
    pub array: ArrayConfig,
    pub camera: CameraConfig,
    pub scenes: ScenesConfig,
    pub features: FeaturesConfig,
    pub model: ModelConfig,
    pub supervision: SupervisionSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub noise: NoiseSection,
    pub ablation: AblationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "desk".into(),
            seeds: vec![0],
            paths: PathsConfig::default(),
            array: ArrayConfig::default(),
            camera: CameraConfig::default(),
            scenes: ScenesConfig::default(),
            features: FeaturesConfig::default(),
            model: ModelConfig::default(),
            supervision: SupervisionSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            noise: NoiseSection::default(),
            ablation: AblationSection::default(),
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn read_layered(path: &Path, depth: usize) -> Result<toml::Table> {
    if depth > 8 {
        return Err(AppError::Config(format!("{}: `base` chain is too deep", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| AppError::Config(format!("{}: {}", path.display(), e.message())))?;
    match table.remove("base") {
        None => Ok(table),
        Some(toml::Value::String(b)) => {
            let base_path = path.parent().unwrap_or(Path::new(".")).join(b);
            let mut base = read_layered(&base_path, depth + 1)?;
            merge(&mut base, table);
            Ok(base)
        }
        Some(_) => Err(AppError::Config(format!("{}: `base` must be a path string", path.display()))),
    }
}

/// Parses an override value as a TOML literal, falling back to a string.
fn override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `ASDL_SECTION__KEY=value` overrides; `__` separates nesting levels.
pub fn apply_env_overrides(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<Vec<String>> {
    let mut applied = Vec::new();
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(AppError::Config(format!("malformed override variable {key}")));
        }
        let mut cur = &mut *table;
        for p in &path[..path.len() - 1] {
            let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry.as_table_mut().ok_or_else(|| AppError::Config(format!("{key}: `{p}` is not a section")))?;
        }
        cur.insert(path[path.len() - 1].clone(), override_value(&raw));
        applied.push(key);
    }
    Ok(applied)
}

impl ExperimentConfig {
    /// Loads a configuration file (or the built-in defaults) and applies
    /// the environment overrides.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = match path {
            Some(p) => read_layered(p, 0)?,
            None => toml::Table::try_from(ExperimentConfig::default()).map_err(|e| AppError::Config(e.to_string()))?,
        };
        apply_env_overrides(&mut table, env)?;
        let cfg: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| AppError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| AppError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes to TOML")
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output root is
    /// left out so that relocated runs keep their identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.output = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("configuration serializes to JSON");
        hex::encode(Sha256::digest(json))
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AppError::Config(m));
        if self.seeds.is_empty() {
            return bad("`seeds` must list at least one seed".into());
        }
        if self.features.mel_bands != F_IN || self.features.gcc_lags != GCC_LAGS {
            return bad(format!("feature axis is fixed at {F_IN} bins ({GCC_LAGS} GCC lags)"));
        }
        if self.camera.n_views != N_VIEWS {
            return bad(format!("the camera one-hot has {N_VIEWS} views"));
        }
        if self.noise.snr_db.is_empty() {
            return bad("`noise.snr_db` must list at least one condition".into());
        }
        if self.eval.tolerances.is_empty() {
            return bad("`eval.tolerances` must not be empty".into());
        }
        for t in &self.eval.tolerances {
            ToleranceSpec::new(t.degrees, t.pixels, t.source)?;
        }
        self.mask_policy()?;
        self.propagation()?;
        let stft = self.stft();
        let chunk = self.features.chunk_s * self.array.sample_rate;
        if (chunk - chunk.round()).abs() > 1e-9 || stft.hop == 0 || stft.chunk_samples != CHUNK_FRAMES * stft.hop {
            return bad(format!("a chunk must span {CHUNK_FRAMES} hops"));
        }
        if self.scenes.train_duration_s < self.features.chunk_s || self.scenes.test_duration_s < self.features.chunk_s {
            return bad("scenes must be at least one chunk long".into());
        }
        self.train_config(0).validate()?;
        self.crnn_config(self.model.variant, self.features.kind).validate()?;
        Ok(())
    }

    pub fn mask_policy(&self) -> Result<MaskPolicy> {
        match self.supervision.mask.as_str() {
            "va-gated" => Ok(MaskPolicy::VaGated),
            "bypass" => Ok(MaskPolicy::Bypass),
            other => Err(AppError::Config(format!("unknown mask policy {other:?}; use va-gated or bypass"))),
        }
    }

    pub fn propagation(&self) -> Result<Propagation> {
        match self.scenes.propagation.as_str() {
            "near-field" => Ok(Propagation::NearField { range_m: self.scenes.range_m }),
            "far-field" => Ok(Propagation::FarField),
            other => Err(AppError::Config(format!("unknown propagation {other:?}; use near-field or far-field"))),
        }
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry { speed_of_sound: self.array.speed_of_sound, sample_rate: self.array.sample_rate, ..ArrayGeometry::default_rig() }
    }

    pub fn cameras(&self) -> Vec<CameraModel> {
        CameraModel::default_views()
            .into_iter()
            .map(|c| CameraModel { horizontal_fov_deg: self.camera.horizontal_fov_deg, image_width: self.camera.image_width, ..c })
            .collect()
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig {
            window_size: self.features.window_size,
            hop: self.features.hop,
            sample_rate: self.array.sample_rate,
            chunk_samples: (self.features.chunk_s * self.array.sample_rate).round() as usize,
        }
    }

    pub fn scene_params(&self) -> SceneParams {
        let s = &self.scenes;
        SceneParams {
            duration_s: s.train_duration_s,
            max_azimuth_deg: s.max_azimuth_deg,
            knot_interval_s: s.knot_interval_s,
            speech_s: (s.speech_s[0], s.speech_s[1]),
            silence_s: (s.silence_s[0], s.silence_s[1]),
            snr_db: None,
            propagation: self.propagation().unwrap_or(Propagation::FarField),
            distractor: s.distractor,
            distractor_gap_deg: s.distractor_gap_deg,
            source_rms: s.source_rms,
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        let s = &self.scenes;
        SplitConfig {
            n_train: s.n_train,
            n_test: s.n_test,
            train_duration_s: s.train_duration_s,
            test_duration_s: s.test_duration_s,
            scene: self.scene_params(),
            seed: s.seed,
        }
    }

    /// Draws the split and applies the configured camera model to it.
    pub fn split(&self) -> Result<Split> {
        let mut split = asdl_core::experiment::build_split(&self.split_config())?;
        let cams = self.cameras();
        let fix = |r: &mut SceneRecord| r.camera = cams[r.camera.view_index];
        split.train.iter_mut().for_each(fix);
        split.test.iter_mut().for_each(fix);
        Ok(split)
    }

    pub fn widths(&self) -> ModelWidths {
        ModelWidths {
            conv_channels: self.model.conv_channels,
            gru_hidden: self.model.gru_hidden,
            gru_layers: self.model.gru_layers,
            fc1_dim: self.model.fc1_dim,
        }
    }

    pub fn crnn_config(&self, variant: Variant, kind: FeatureKind) -> CrnnConfig {
        let base = CrnnConfig::for_features(variant, kind, &self.geometry());
        CrnnConfig { bn_momentum: self.model.bn_momentum, bn_eps: self.model.bn_eps, ..self.widths().apply(base) }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lr_fixed_epochs: t.lr_fixed_epochs,
            lr_decay: t.lr_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_eps: t.adam_eps,
            seed,
        }
    }

    pub fn teacher_params(&self) -> TeacherParams {
        let s = &self.supervision;
        TeacherParams {
            occlusion_fraction: s.occlusion_fraction,
            occlusion_burst_frames: s.occlusion_burst_frames,
            jitter_sigma: s.jitter_sigma,
            false_positive_rate: s.false_positive_rate,
            ..TeacherParams::default()
        }
    }

    pub fn supervision(&self, config: SupervisionConfig) -> Supervision {
        Supervision { config, mask: self.mask_policy().unwrap_or(MaskPolicy::VaGated), teacher: self.teacher_params() }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.eval;
        EvalConfig {
            n_thresholds: e.n_thresholds,
            z_max: e.z_max,
            ad_operating_point: e.ad_operating_point,
            ad_scope: e.ad_scope,
            det_threshold: e.det_threshold,
        }
    }

    pub fn tolerances(&self) -> Vec<ToleranceSpec> {
        self.eval.tolerances.iter().map(|t| ToleranceSpec { degrees: t.degrees, pixels: t.pixels, source: t.source }).collect()
    }

    pub fn run_config(&self, variant: Variant, supervision: SupervisionConfig, seed: u64) -> RunConfig {
        RunConfig {
            variant,
            widths: self.widths(),
            supervision: self.supervision(supervision),
            train: self.train_config(seed),
            eval: self.eval_config(),
        }
    }
}
