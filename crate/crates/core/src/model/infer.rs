use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::BnMode;
use super::network::{forward_batch, stack_inputs, CrnnParams, Prediction};
use super::real::Real;
use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::supervision::{LabelFrame, LabelTrack, FRAME_RATE};

/// Predictions for one feature tensor whose length is a multiple of the
/// model input (a 2 s chunk runs as twelve windows through CNN-F).
pub fn predict_chunk<T: Real>(params: &CrnnParams<T>, features: &FeatureTensor, view: usize) -> Result<Vec<Prediction>> {
    let len = params.config.input_frames;
    if features.frames % len != 0 || features.frames == 0 {
        return Err(Error::size(format!("{} frames is not a multiple of the model input {len}", features.frames)));
    }
    let n = features.frames / len;
    let windows: Vec<FeatureTensor> = if n == 1 {
        vec![features.clone()]
    } else {
        (0..n).map(|k| features.frame_window(k * len, len)).collect::<Result<_>>()?
    };
    let refs: Vec<&FeatureTensor> = windows.iter().collect();
    let input = stack_inputs::<T>(&params.config, &refs)?;
    let pass = forward_batch(params, &input, n, &vec![view; n], BnMode::Running)?;
    Ok((0..n).flat_map(|k| pass.predictions(k)).collect())
}

/// Stitches chunk predictions taken at a hop of `hop_frames` output frames,
/// averaging `(x, C)` where windows overlap.
pub fn stitch(chunks: &[Vec<Prediction>], hop_frames: usize) -> Result<Vec<Prediction>> {
    let Some(first) = chunks.first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    if chunks.iter().any(|c| c.len() != len) || hop_frames == 0 || hop_frames > len {
        return Err(Error::size("chunks must share one length and the hop must lie in 1..=length"));
    }
    let total = (chunks.len() - 1) * hop_frames + len;
    let mut sum = vec![(0.0, 0.0, 0usize); total];
    for (k, c) in chunks.iter().enumerate() {
        for (i, p) in c.iter().enumerate() {
            let s = &mut sum[k * hop_frames + i];
            s.0 += p.x;
            s.1 += p.confidence;
            s.2 += 1;
        }
    }
    Ok(sum.into_iter().map(|(x, c, n)| Prediction { x: x / n as f64, confidence: c / n as f64 }).collect())
}

/// Averaged per-frame predictions of a long clip given its chunk features.
pub fn infer_predictions<T: Real>(params: &CrnnParams<T>, chunks: &[FeatureTensor], hop_frames: usize, view: usize) -> Result<Vec<Prediction>> {
    let preds: Vec<Vec<Prediction>> = chunks.iter().map(|c| predict_chunk(params, c, view)).collect::<Result<_>>()?;
    stitch(&preds, hop_frames)
}

/// Thresholds stitched predictions into a track: frames with `C >= threshold`
/// are active and carry `x`.
pub fn predictions_to_track(preds: &[Prediction], view: usize, threshold: f64) -> LabelTrack {
    let frames = preds
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let active = p.confidence >= threshold;
            LabelFrame { frame: i as u32, view, active, x_norm: active.then_some(p.x), confidence: Some(p.confidence) }
        })
        .collect();
    LabelTrack { frame_rate: FRAME_RATE, frames }
}

pub fn infer_track<T: Real>(params: &CrnnParams<T>, chunks: &[FeatureTensor], hop_frames: usize, view: usize, threshold: f64) -> Result<LabelTrack> {
    Ok(predictions_to_track(&infer_predictions(params, chunks, hop_frames, view)?, view, threshold))
}
