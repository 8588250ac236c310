//! Multichannel 24-bit PCM WAV files.

use std::io::Cursor;
use std::path::Path;

use asdl_core::MultichannelClip;

use crate::error::{AppError, Result};

const FULL_SCALE: f64 = 8_388_607.0;

pub fn encode(clip: &MultichannelClip) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: clip.n_channels() as u16,
        sample_rate: clip.sample_rate.round() as u32,
        bits_per_sample: 24,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    let mut w = hound::WavWriter::new(&mut buf, spec).map_err(|e| AppError::Config(e.to_string()))?;
    for i in 0..clip.n_samples() {
        for ch in &clip.channels {
            let q = (ch[i].clamp(-1.0, 1.0) * FULL_SCALE).round() as i32;
            w.write_sample(q).map_err(|e| AppError::Config(e.to_string()))?;
        }
    }
    w.finalize().map_err(|e| AppError::Config(e.to_string()))?;
    Ok(buf.into_inner())
}

pub fn write(path: &Path, clip: &MultichannelClip) -> Result<()> {
    super::write_atomic(path, &encode(clip)?)
}

/// Reads a WAV file; `active_segments` is left empty for the caller to fill.
pub fn read(path: &Path) -> Result<MultichannelClip> {
    let mut r = hound::WavReader::open(path).map_err(|e| AppError::format(path, e.to_string()))?;
    let spec = r.spec();
    let n_ch = spec.channels as usize;
    let scale = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, b) => ((1i64 << (b - 1)) - 1) as f64,
        (hound::SampleFormat::Float, _) => 1.0,
    };
    let mut channels = vec![Vec::with_capacity(r.len() as usize / n_ch.max(1)); n_ch];
    match spec.sample_format {
        hound::SampleFormat::Int => {
            for (i, s) in r.samples::<i32>().enumerate() {
                let s = s.map_err(|e| AppError::format(path, e.to_string()))?;
                channels[i % n_ch].push(s as f64 / scale);
            }
        }
        hound::SampleFormat::Float => {
            for (i, s) in r.samples::<f32>().enumerate() {
                let s = s.map_err(|e| AppError::format(path, e.to_string()))?;
                channels[i % n_ch].push(s as f64);
            }
        }
    }
    Ok(MultichannelClip { channels, sample_rate: spec.sample_rate as f64, active_segments: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_within_one_lsb() {
        let channels: Vec<Vec<f64>> = (0..3).map(|c| (0..500).map(|i| ((i * (c + 1)) as f64 * 0.01).sin() * 0.7).collect()).collect();
        let clip = MultichannelClip { channels: channels.clone(), sample_rate: 48_000.0, active_segments: vec![] };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write(&p, &clip).unwrap();
        let back = read(&p).unwrap();
        assert_eq!(back.sample_rate, 48_000.0);
        assert_eq!(back.channels.len(), 3);
        for (a, b) in channels.iter().zip(&back.channels) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1.0 / FULL_SCALE);
            }
        }
    }
}
