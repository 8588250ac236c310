//! Label tracks (`frame,view,active,x_left_px,x_right_px,confidence`),
//! voice-activity segments (`onset_s,offset_s`) and fused targets.

use std::path::Path;

use asdl_core::supervision::{ingest_teacher_records, IngestedTrack, TeacherRecord, FRAME_RATE};
use asdl_core::{LabelTrack, TrainingTarget};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    frame: u32,
    view: usize,
    active: u8,
    x_left_px: Option<f64>,
    x_right_px: Option<f64>,
    confidence: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VaRow {
    onset_s: f64,
    offset_s: f64,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| AppError::Config(e.to_string()))?;
    }
    w.into_inner().map_err(|e| AppError::Config(e.to_string()))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AppError::format(path, e.to_string()))?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                AppError::format(path, format!("line {line}: {e}"))
            })
        })
        .collect()
}

/// Detections are written as zero-width boxes centered on the position, so
/// reading the file back reproduces the normalized centers.
pub fn encode_track(track: &LabelTrack, image_width: f64) -> Result<Vec<u8>> {
    csv_bytes(track.frames.iter().map(|f| {
        let x = f.detection().map(|x| x * image_width);
        LabelRow { frame: f.frame, view: f.view, active: f.active as u8, x_left_px: x, x_right_px: x, confidence: f.confidence }
    }))
}

pub fn write_track(path: &Path, track: &LabelTrack, image_width: f64) -> Result<()> {
    super::write_atomic(path, &encode_track(track, image_width)?)
}

/// Reads a label CSV written by this tool or by an external teacher.
pub fn read_track(path: &Path, image_width: f64) -> Result<IngestedTrack> {
    let rows: Vec<LabelRow> = read_rows(path)?;
    let records: Vec<TeacherRecord> = rows
        .into_iter()
        .map(|r| TeacherRecord { frame: r.frame, view: r.view, active: r.active != 0, x_left_px: r.x_left_px, x_right_px: r.x_right_px, confidence: r.confidence })
        .collect();
    ingest_teacher_records(&records, image_width, FRAME_RATE).map_err(|e| AppError::format(path, e.to_string()))
}

pub fn write_segments(path: &Path, segments: &[(f64, f64)]) -> Result<()> {
    super::write_atomic(path, &csv_bytes(segments.iter().map(|&(onset_s, offset_s)| VaRow { onset_s, offset_s }))?)
}

pub fn read_segments(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows: Vec<VaRow> = read_rows(path)?;
    let segs: Vec<(f64, f64)> = rows.into_iter().map(|r| (r.onset_s, r.offset_s)).collect();
    asdl_core::sim::validate_segments(&segs, f64::INFINITY).map_err(|e| AppError::format(path, e.to_string()))?;
    Ok(segs)
}

pub fn write_target(path: &Path, target: &TrainingTarget) -> Result<()> {
    super::write_json(path, target)
}

pub fn read_target(path: &Path) -> Result<TrainingTarget> {
    super::read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use asdl_core::supervision::LabelFrame;

    #[test]
    fn track_round_trip() {
        let frames = vec![
            LabelFrame { frame: 0, view: 3, active: true, x_norm: Some(0.25), confidence: Some(0.9) },
            LabelFrame::inactive(1, 3),
            LabelFrame { frame: 2, view: 3, active: true, x_norm: Some(0.75), confidence: None },
        ];
        let track = LabelTrack::new(FRAME_RATE, frames).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_track(&p, &track, 2448.0).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("frame,view,active,x_left_px,x_right_px,confidence\n"));
        let back = read_track(&p, 2448.0).unwrap();
        assert_eq!(back.rejected, 0);
        for (a, b) in back.track.frames.iter().zip(&track.frames) {
            assert_eq!(a.active, b.active);
            assert_eq!(a.confidence, b.confidence);
            match (a.x_norm, b.x_norm) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12),
                (None, None) => {}
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn malformed_row_reports_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "frame,view,active,x_left_px,x_right_px,confidence\n0,0,1,10,20,\n1,0,oops,,,\n").unwrap();
        let err = read_track(&p, 100.0).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn segments_round_trip_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("va.csv");
        write_segments(&p, &[(0.5, 1.25), (2.0, 3.0)]).unwrap();
        assert_eq!(read_segments(&p).unwrap(), vec![(0.5, 1.25), (2.0, 3.0)]);
        std::fs::write(&p, "onset_s,offset_s\n1.0,0.5\n").unwrap();
        assert!(read_segments(&p).is_err());
    }
}
