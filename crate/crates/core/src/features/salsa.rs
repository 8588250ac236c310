use alloc::vec::Vec;
use core::f64::consts::PI;

use super::mel::LOG_FLOOR;
use super::stft::{stft, Spectrogram, StftConfig};
use super::{FeatureKind, FeatureTensor};
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::sim::MultichannelClip;

/// Linear-frequency bins kept: `64 * 48000 / 512 = 6 kHz` upper edge.
pub const SALSA_BINS: usize = 64;

/// Multiplier applied to `c / (2 pi f) * arg(X_ref conj(X_m))`. The default
/// `-1` turns the phase difference into the path difference
/// `c * tdoa(ref, m)` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NipdScale(pub f64);

impl Default for NipdScale {
    fn default() -> Self {
        NipdScale(-1.0)
    }
}

pub fn salsa_lite_features(
    clip: &MultichannelClip,
    geometry: &ArrayGeometry,
    cfg: &StftConfig,
    scale: NipdScale,
) -> Result<FeatureTensor> {
    clip.validate(geometry)?;
    if cfg.n_bins() < SALSA_BINS {
        return Err(Error::config("STFT too short for the SALSA-Lite band"));
    }
    let reference = geometry.reference_mic_index;
    let specs: Vec<Spectrogram> = clip.channels.iter().map(|ch| stft(ch, cfg)).collect::<Result<_>>()?;
    let frames = cfg.n_frames();
    let mut out = FeatureTensor::zeros(FeatureKind::SalsaLite, geometry.n_mics(), frames, SALSA_BINS);

    let r = &specs[reference];
    for t in 0..frames {
        for k in 0..SALSA_BINS {
            let idx = out.index(0, t, k);
            out.data[idx] = libm::log(r.at(t, k).norm_sqr().max(LOG_FLOOR)) as f32;
        }
    }

    let others = (0..geometry.n_mics()).filter(|&m| m != reference);
    for (c, mic) in others.enumerate() {
        for t in 0..frames {
            for k in 1..SALSA_BINS {
                let cross = r.at(t, k) * specs[mic].at(t, k).conj();
                let value = if cross.re != 0.0 || cross.im != 0.0 {
                    let f = k as f64 * cfg.bin_hz();
                    scale.0 * geometry.speed_of_sound / (2.0 * PI * f) * libm::atan2(cross.im, cross.re)
                } else {
                    0.0
                };
                let idx = out.index(c + 1, t, k);
                out.data[idx] = value as f32;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_top_edge_is_six_khz() {
        let cfg = StftConfig::default();
        assert_eq!(SALSA_BINS as f64 * cfg.bin_hz(), 6000.0);
    }
}
