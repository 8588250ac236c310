use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{FeatureKind, FeatureTensor};
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel, per-bin mean/std over every frame of the training set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormStats {
    pub kind: FeatureKind,
    pub channels: usize,
    pub bins: usize,
    /// Row-major `[channel][bin]`.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Default)]
struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Two-pass population statistics; the std is floored at `STD_FLOOR`.
pub fn fit_normalization(tensors: &[FeatureTensor]) -> Result<NormStats> {
    let first = tensors.first().ok_or_else(|| Error::Precondition("empty training set".into()))?;
    let (kind, channels, bins) = (first.kind, first.channels, first.bins);
    if let Some(t) = tensors.iter().find(|t| t.kind != kind || t.channels != channels || t.bins != bins) {
        return Err(Error::size(format!("tensor {:?} ({} {}x{}) differs from the training set", t.id, t.kind, t.channels, t.bins)));
    }
    let cells = channels * bins;
    let mut sums = vec![Sum::default(); cells];
    let mut count = 0usize;
    for t in tensors {
        for c in 0..channels {
            for frame in t.channel(c).chunks_exact(bins) {
                for (b, &v) in frame.iter().enumerate() {
                    sums[c * bins + b].add(v as f64);
                }
            }
        }
        count += t.frames;
    }
    let n = count as f64;
    let mean: Vec<f64> = sums.iter().map(|s| s.value() / n).collect();
    let mut sq = vec![Sum::default(); cells];
    for t in tensors {
        for c in 0..channels {
            for frame in t.channel(c).chunks_exact(bins) {
                for (b, &v) in frame.iter().enumerate() {
                    let d = v as f64 - mean[c * bins + b];
                    sq[c * bins + b].add(d * d);
                }
            }
        }
    }
    let std = sq.iter().map(|s| libm::sqrt(s.value() / n).max(STD_FLOOR)).collect();
    Ok(NormStats { kind, channels, bins, mean, std })
}

pub fn apply_normalization(tensor: &FeatureTensor, stats: &NormStats) -> Result<FeatureTensor> {
    if tensor.kind != stats.kind || tensor.channels != stats.channels || tensor.bins != stats.bins {
        return Err(Error::size(format!(
            "tensor {} {}x{} does not match statistics {} {}x{}",
            tensor.kind, tensor.channels, tensor.bins, stats.kind, stats.channels, stats.bins
        )));
    }
    let mut out = tensor.clone();
    let bins = tensor.bins;
    for c in 0..tensor.channels {
        for frame in out.channel_mut(c).chunks_exact_mut(bins) {
            for (b, v) in frame.iter_mut().enumerate() {
                let i = c * bins + b;
                *v = ((*v as f64 - stats.mean[i]) / stats.std[i]) as f32;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(values: Vec<f32>, frames: usize) -> FeatureTensor {
        FeatureTensor::new(FeatureKind::LogMel1, 1, frames, values.len() / frames, values, "t").unwrap()
    }

    #[test]
    fn self_normalization_is_standard() {
        let vals: Vec<f32> = (0..40).map(|i| ((i * 37) % 11) as f32 * 0.3 + (i % 2) as f32).collect();
        let t = tensor(vals, 10);
        let stats = fit_normalization(core::slice::from_ref(&t)).unwrap();
        let z = apply_normalization(&t, &stats).unwrap();
        for b in 0..4 {
            let col: Vec<f64> = (0..10).map(|f| z.get(0, f, b) as f64).collect();
            let mean = col.iter().sum::<f64>() / 10.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10.0;
            assert!(mean.abs() < 1e-6);
            assert!((libm::sqrt(var) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_bin_maps_to_zero() {
        let t = tensor(vec![3.5; 8], 8);
        let stats = fit_normalization(core::slice::from_ref(&t)).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        assert!(apply_normalization(&t, &stats).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_tensor_population_stats() {
        let a = tensor(vec![0.0; 3], 1);
        let b = tensor(vec![2.0; 3], 1);
        let stats = fit_normalization(&[a.clone(), b.clone()]).unwrap();
        assert!(stats.mean.iter().all(|&m| m == 1.0));
        assert!(stats.std.iter().all(|&s| s == 1.0));
        assert!(apply_normalization(&a, &stats).unwrap().data.iter().all(|&v| v == -1.0));
        assert!(apply_normalization(&b, &stats).unwrap().data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_set_is_error() {
        assert!(fit_normalization(&[]).is_err());
    }
}
