use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * libm::log10(1.0 + f / 700.0)
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (libm::pow(10.0, m / 2595.0) - 1.0)
}

/// Triangular HTK-mel filterbank spanning 0 Hz to Nyquist, unnormalized
/// (peak weight 1).
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    /// Row-major `[mel][bin]`.
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_size: usize, sample_rate: f64) -> Self {
        let n_bins = fft_size / 2 + 1;
        let top = hz_to_mel(sample_rate / 2.0);
        let edges: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect();
        let mut weights = alloc::vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * sample_rate / fft_size as f64;
                let rise = (f - lo) / (mid - lo);
                let fall = (hi - f) / (hi - mid);
                weights[m * n_bins + k] = rise.min(fall).max(0.0);
            }
        }
        Self { n_mels, n_bins, weights }
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }
}

/// Log mel energies of a one-sided power spectrogram (`[frame][bin]`).
pub fn log_mel(power: &[f64], bank: &MelFilterbank) -> Result<Vec<f64>> {
    if power.len() % bank.n_bins != 0 {
        return Err(Error::size(format!("power spectrogram of {} values is not a multiple of {} bins", power.len(), bank.n_bins)));
    }
    let mut out = Vec::with_capacity(power.len() / bank.n_bins * bank.n_mels);
    for frame in power.chunks_exact(bank.n_bins) {
        for m in 0..bank.n_mels {
            let e: f64 = bank.row(m).iter().zip(frame).map(|(w, p)| w * p).sum();
            out.push(libm::log(e.max(LOG_FLOOR)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_power_is_log_floor() {
        let bank = MelFilterbank::new(64, 512, 48_000.0);
        let out = log_mel(&vec![0.0; 257 * 3], &bank).unwrap();
        assert!(out.iter().all(|&v| v == libm::log(LOG_FLOOR)));
        assert_eq!(out.len(), 64 * 3);
    }

    #[test]
    fn power_doubling_adds_log_two() {
        let bank = MelFilterbank::new(64, 512, 48_000.0);
        let p: Vec<f64> = (0..257).map(|k| 1.0 + k as f64).collect();
        let p2: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        let (a, b) = (log_mel(&p, &bank).unwrap(), log_mel(&p2, &bank).unwrap());
        for (x, y) in a.iter().zip(&b) {
            if *x > libm::log(LOG_FLOOR) {
                assert!((y - x - libm::log(2.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tone_energy_lands_in_covering_bands() {
        let bank = MelFilterbank::new(64, 512, 48_000.0);
        let bin = 10;
        let mut p = vec![0.0; 257];
        p[bin] = 1.0;
        let covering: Vec<usize> = (0..64).filter(|&m| bank.row(m)[bin] > 0.0).collect();
        assert!(!covering.is_empty() && covering.len() <= 2);
        let out = log_mel(&p, &bank).unwrap();
        for m in 0..64 {
            let expected = libm::log(bank.row(m)[bin].max(LOG_FLOOR));
            assert!((out[m] - expected).abs() < 1e-12);
            if !covering.contains(&m) {
                assert_eq!(out[m], libm::log(LOG_FLOOR));
            }
        }
    }

    #[test]
    fn bands_span_to_nyquist() {
        let bank = MelFilterbank::new(64, 512, 48_000.0);
        // The top band's upper edge is Nyquist: the last bin has zero weight
        // while bins just below it are covered.
        assert_eq!(bank.row(63)[256], 0.0);
        assert!(bank.row(63)[250] > 0.0);
    }
}
