//! Spatial input features for the student network.
//!
//! Every kind produces a `Ch_in × T_in × F_in` tensor for a 2 s chunk with
//! `T_in = 960` STFT frames and `F_in = 64` bins:
//!
//! | kind        | channel 0                  | channels 1..          |
//! |-------------|----------------------------|-----------------------|
//! | GCC-PHAT    | reference log-mel          | 15 GCC-PHAT lag rows  |
//! | SALSA-Lite  | reference log-linear 0–6 kHz | 15 NIPD maps        |
//! | LOGMEL-16   | log-mel of every mic                              ||
//! | LOGMEL-2    | log-mel of the stereo pair                        ||
//! | LOGMEL-1    | log-mel of the center mic                         ||

mod gcc;
mod mel;
mod norm;
mod salsa;
mod stft;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use gcc::{gcc_phat_features, gcc_phat_frame, max_lag, GCC_LAGS, PHAT_EPS};
pub use mel::{log_mel, MelFilterbank, LOG_FLOOR};
pub use norm::{apply_normalization, fit_normalization, NormStats, STD_FLOOR};
pub use salsa::{salsa_lite_features, NipdScale, SALSA_BINS};
pub use stft::{stft, Spectrogram, StftConfig};

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::sim::MultichannelClip;

pub const F_IN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FeatureKind {
    #[cfg_attr(feature = "serde", serde(rename = "GCC-PHAT"))]
    GccPhat,
    #[cfg_attr(feature = "serde", serde(rename = "SALSA-Lite"))]
    SalsaLite,
    #[cfg_attr(feature = "serde", serde(rename = "LOGMEL-16"))]
    LogMel16,
    #[cfg_attr(feature = "serde", serde(rename = "LOGMEL-2"))]
    LogMel2,
    #[cfg_attr(feature = "serde", serde(rename = "LOGMEL-1"))]
    LogMel1,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] =
        [FeatureKind::GccPhat, FeatureKind::SalsaLite, FeatureKind::LogMel16, FeatureKind::LogMel2, FeatureKind::LogMel1];

    pub fn channels(self, geometry: &ArrayGeometry) -> usize {
        match self {
            FeatureKind::GccPhat | FeatureKind::SalsaLite | FeatureKind::LogMel16 => geometry.n_mics(),
            FeatureKind::LogMel2 => 2,
            FeatureKind::LogMel1 => 1,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            FeatureKind::GccPhat => 1,
            FeatureKind::SalsaLite => 2,
            FeatureKind::LogMel16 => 3,
            FeatureKind::LogMel2 => 4,
            FeatureKind::LogMel1 => 5,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::GccPhat => "GCC-PHAT",
            FeatureKind::SalsaLite => "SALSA-Lite",
            FeatureKind::LogMel16 => "LOGMEL-16",
            FeatureKind::LogMel2 => "LOGMEL-2",
            FeatureKind::LogMel1 => "LOGMEL-1",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    /// Accepts the canonical names plus the ablation aliases
    /// `Mono`, `Stereo` and `16mics`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Ok(match t.as_str() {
            "gcc-phat" | "gccphat" | "gcc" => FeatureKind::GccPhat,
            "salsa-lite" | "salsalite" | "salsa" => FeatureKind::SalsaLite,
            "logmel-16" | "16mics" => FeatureKind::LogMel16,
            "logmel-2" | "stereo" => FeatureKind::LogMel2,
            "logmel-1" | "mono" => FeatureKind::LogMel1,
            _ => return Err(Error::config(format!("unknown feature kind {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    /// Row-major `[channel][frame][bin]`.
    pub data: Vec<f32>,
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub kind: FeatureKind,
    pub id: String,
}

impl FeatureTensor {
    pub fn new(kind: FeatureKind, channels: usize, frames: usize, bins: usize, data: Vec<f32>, id: impl Into<String>) -> Result<Self> {
        if data.len() != channels * frames * bins {
            return Err(Error::size(format!("{} values for a {channels}x{frames}x{bins} tensor", data.len())));
        }
        Ok(Self { data, channels, frames, bins, kind, id: id.into() })
    }

    pub fn zeros(kind: FeatureKind, channels: usize, frames: usize, bins: usize) -> Self {
        Self { data: alloc::vec![0.0; channels * frames * bins], channels, frames, bins, kind, id: String::new() }
    }

    #[inline]
    pub fn index(&self, c: usize, t: usize, f: usize) -> usize {
        (c * self.frames + t) * self.bins + f
    }

    pub fn get(&self, c: usize, t: usize, f: usize) -> f32 {
        self.data[self.index(c, t, f)]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.frames * self.bins;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.frames * self.bins;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frames `[start, start + len)` of every channel.
    pub fn frame_window(&self, start: usize, len: usize) -> Result<FeatureTensor> {
        if start + len > self.frames {
            return Err(Error::size(format!("window {start}+{len} exceeds {} frames", self.frames)));
        }
        let mut data = Vec::with_capacity(self.channels * len * self.bins);
        for c in 0..self.channels {
            let from = self.index(c, start, 0);
            data.extend_from_slice(&self.data[from..from + len * self.bins]);
        }
        FeatureTensor::new(self.kind, self.channels, len, self.bins, data, self.id.clone())
    }
}

/// Extracts features of `kind` from a 2 s multichannel chunk.
pub fn extract(kind: FeatureKind, clip: &MultichannelClip, geometry: &ArrayGeometry, cfg: &StftConfig) -> Result<FeatureTensor> {
    clip.validate(geometry)?;
    match kind {
        FeatureKind::GccPhat => gcc_phat_features(clip, geometry, cfg),
        FeatureKind::SalsaLite => salsa_lite_features(clip, geometry, cfg, NipdScale::default()),
        FeatureKind::LogMel16 => {
            let mics: Vec<usize> = (0..geometry.n_mics()).collect();
            log_mel_stack(kind, clip, &mics, cfg)
        }
        FeatureKind::LogMel2 => {
            geometry.verify_stereo_pair(crate::geometry::STEREO_HALF_SPACING)?;
            log_mel_stack(kind, clip, &geometry.stereo_mic_indices, cfg)
        }
        FeatureKind::LogMel1 => log_mel_stack(kind, clip, &[geometry.center_mic_index], cfg),
    }
}

fn log_mel_stack(kind: FeatureKind, clip: &MultichannelClip, mics: &[usize], cfg: &StftConfig) -> Result<FeatureTensor> {
    let bank = MelFilterbank::new(F_IN, cfg.window_size, cfg.sample_rate);
    let mut out = FeatureTensor::zeros(kind, mics.len(), cfg.n_frames(), F_IN);
    for (c, &mic) in mics.iter().enumerate() {
        let spec = stft(&clip.channels[mic], cfg)?;
        let mel = log_mel(&spec.power(), &bank)?;
        for (dst, src) in out.channel_mut(c).iter_mut().zip(&mel) {
            *dst = *src as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_parse() {
        for k in FeatureKind::ALL {
            assert_eq!(k.name().parse::<FeatureKind>().unwrap(), k);
            assert_eq!(FeatureKind::from_code(k.code()), Some(k));
        }
        assert_eq!("Mono".parse::<FeatureKind>().unwrap(), FeatureKind::LogMel1);
        assert_eq!("16mics".parse::<FeatureKind>().unwrap(), FeatureKind::LogMel16);
        assert!("banana".parse::<FeatureKind>().is_err());
    }
}
