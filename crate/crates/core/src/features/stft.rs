use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StftConfig {
    pub window_size: usize,
    pub hop: usize,
    pub sample_rate: f64,
    /// Required input length (2 s at 48 kHz by default).
    pub chunk_samples: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_size: 512, hop: 100, sample_rate: 48_000.0, chunk_samples: 96_000 }
    }
}

impl StftConfig {
    /// Frames are centered on samples `0, hop, 2 hop, ...` strictly before
    /// the end of the chunk.
    pub fn n_frames(&self) -> usize {
        self.chunk_samples / self.hop
    }

    pub fn n_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate / self.window_size as f64
    }

    /// Periodic Hann window.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_size as f64;
        (0..self.window_size).map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n)).collect()
    }
}

/// One-sided complex spectrogram, row-major `[frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn at(&self, t: usize, k: usize) -> Complex64 {
        self.data[t * self.bins + k]
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn power(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Reflect padding without edge repetition, `x[-k] = x[k]`.
fn reflect(signal: &[f64], idx: i64) -> f64 {
    let n = signal.len() as i64;
    let mut i = idx;
    if n == 1 {
        return signal[0];
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    signal[i as usize]
}

/// Hann-windowed STFT of one channel; frame `t` is centered on sample
/// `t * hop` with reflect padding of `window_size / 2` on both ends.
pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    if signal.len() != cfg.chunk_samples {
        return Err(Error::size(format!("STFT input has {} samples, expected {}", signal.len(), cfg.chunk_samples)));
    }
    let plan = Fft::new(cfg.window_size)?;
    let window = cfg.window();
    let half = (cfg.window_size / 2) as i64;
    let frames = cfg.n_frames();
    let bins = cfg.n_bins();
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.window_size];
    for t in 0..frames {
        let start = (t * cfg.hop) as i64 - half;
        let interior = start >= 0 && start + cfg.window_size as i64 <= signal.len() as i64;
        for (j, (b, w)) in buf.iter_mut().zip(&window).enumerate() {
            let x = if interior { signal[start as usize + j] } else { reflect(signal, start + j as i64) };
            *b = Complex64::new(x * w, 0.0);
        }
        plan.forward(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram { frames, bins, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn two_second_chunk_has_960_frames() {
        let cfg = StftConfig::default();
        let s = stft(&vec![0.0; 96_000], &cfg).unwrap();
        assert_eq!((s.frames, s.bins), (960, 257));
        assert!(s.data.iter().all(|c| c.norm() == 0.0));
        assert!(matches!(stft(&vec![0.0; 95_999], &cfg), Err(Error::Size(_))));
    }

    #[test]
    fn bin_centered_tone_peaks_in_bin_ten() {
        let cfg = StftConfig::default();
        let f = 10.0 * 48_000.0 / 512.0;
        assert_eq!(f, 937.5);
        let x: Vec<f64> = (0..96_000).map(|n| libm::sin(2.0 * PI * f * n as f64 / 48_000.0)).collect();
        let s = stft(&x, &cfg).unwrap();
        // Reflect padding mirrors the sine around sample 0, so the first
        // frames are not a steady tone; they still peak next to bin 10.
        for t in 0..s.frames {
            let peak = (0..s.bins).max_by(|&a, &b| s.at(t, a).norm().partial_cmp(&s.at(t, b).norm()).unwrap()).unwrap();
            let interior = t * cfg.hop >= 256 && t * cfg.hop + 256 <= x.len();
            if interior {
                assert_eq!(peak, 10, "frame {t}");
            } else {
                assert!((9..=11).contains(&peak), "frame {t}: {peak}");
            }
        }
    }

    #[test]
    fn impulse_first_frame_matches_direct_dft() {
        // Frame 0 is centered on sample 0, so the windowed frame holds the
        // impulse at window position 256; its DFT is computed directly.
        let cfg = StftConfig::default();
        let mut x = vec![0.0; 96_000];
        x[0] = 1.0;
        let s = stft(&x, &cfg).unwrap();
        let w = cfg.window();
        for k in 0..cfg.n_bins() {
            let direct: Complex64 = (0..512)
                .map(|n| {
                    let v = if n == 256 { w[n] } else { 0.0 };
                    v * Complex64::from_polar(1.0, -2.0 * PI * (k * n) as f64 / 512.0)
                })
                .sum();
            assert!((s.at(0, k).norm() - direct.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_energy_for_white_noise() {
        let cfg = StftConfig::default();
        let mut rng = rng::stream(1, 1);
        let x: Vec<f64> = (0..96_000).map(|_| crate::rng::standard_normal(&mut rng)).collect();
        let s = stft(&x, &cfg).unwrap();
        let n = cfg.window_size as f64;
        // Two-sided energy from the one-sided spectrum.
        let spec_energy: f64 = (0..s.frames)
            .map(|t| {
                let fr = s.frame(t);
                let mut e = fr[0].norm_sqr() + fr[256].norm_sqr();
                e += 2.0 * fr[1..256].iter().map(|c| c.norm_sqr()).sum::<f64>();
                e / n
            })
            .sum();
        let w2: f64 = cfg.window().iter().map(|w| w * w).sum();
        let time_energy: f64 = x.iter().map(|v| v * v).sum::<f64>() * w2 / cfg.hop as f64;
        assert!((spec_energy / time_energy - 1.0).abs() < 0.01);
    }
}
