//! Metrics JSON, PR-curve CSV/SVG and training-curve CSV.

use std::fmt::Write as _;
use std::path::Path;

use asdl_core::eval::{precision_envelope, MetricsReport, PrPoint};
use asdl_core::model::EpochRecord;
use serde::Serialize;

use crate::error::{AppError, Result};

#[derive(Serialize)]
struct PrRow {
    threshold: f64,
    precision: Option<f64>,
    recall: f64,
}

pub fn pr_csv(points: &[PrPoint]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(PrRow { threshold: p.threshold, precision: p.precision, recall: p.recall }).map_err(|e| AppError::Config(e.to_string()))?;
    }
    w.into_inner().map_err(|e| AppError::Config(e.to_string()))
}

#[derive(Serialize)]
struct CurveRow {
    epoch: usize,
    lr: f64,
    train_loss: f64,
    steps: usize,
}

pub fn curve_csv(epochs: &[EpochRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in epochs {
        w.serialize(CurveRow { epoch: e.epoch, lr: e.lr, train_loss: e.train_loss, steps: e.steps }).map_err(|e| AppError::Config(e.to_string()))?;
    }
    w.into_inner().map_err(|e| AppError::Config(e.to_string()))
}

/// Precision-recall plot: raw points, the monotone envelope used for AP and
/// a marker at the best-F1 operating point.
pub fn pr_svg(report: &MetricsReport, title: &str) -> String {
    const W: f64 = 420.0;
    const H: f64 = 360.0;
    const L: f64 = 50.0;
    const T: f64 = 30.0;
    const S: f64 = 300.0;
    let px = |r: f64| L + r * S;
    let py = |p: f64| T + (1.0 - p) * S;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect x="{L}" y="{T}" width="{S}" height="{S}" fill="none" stroke="black"/>"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, px(v), T + S + 15.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, L - 5.0, py(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">recall</text>"#, L + S / 2.0, T + S + 30.0);
    let _ = writeln!(s, r#"<text x="12" y="{:.1}" text-anchor="middle" transform="rotate(-90 12 {:.1})">precision</text>"#, T + S / 2.0, T + S / 2.0);
    let _ = writeln!(s, r#"<text x="{L}" y="18">{} (AP {:.3}, tolerance {:.0} px)</text>"#, escape(title), report.ap, report.tolerance.pixels);
    let mut pts: Vec<(f64, f64)> = report.pr_points.iter().filter_map(|p| p.precision.map(|q| (p.recall, q))).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let raw: Vec<String> = pts.iter().map(|&(r, p)| format!("{:.2},{:.2}", px(r), py(p))).collect();
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#999" points="{}"/>"##, raw.join(" "));
    let env = precision_envelope(&pts);
    let mut step = Vec::new();
    let mut prev_r = 0.0;
    for &(r, p) in &env {
        step.push(format!("{:.2},{:.2}", px(prev_r), py(p)));
        step.push(format!("{:.2},{:.2}", px(r), py(p)));
        prev_r = r;
    }
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#c22" stroke-width="1.5" points="{}"/>"##, step.join(" "));
    let _ = writeln!(
        s,
        r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#26c"><title>best F1 {:.3} at threshold {:.4}</title></circle>"##,
        px(report.recall_at_best),
        py(report.precision_at_best),
        report.f1_best,
        report.f1_threshold
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `metrics_<tag>.json`, `pr_<tag>.csv` and `pr_<tag>.svg` into `dir`.
pub fn write_report(dir: &Path, tag: &str, title: &str, report: &MetricsReport) -> Result<()> {
    super::write_json(&dir.join(format!("metrics_{tag}.json")), report)?;
    super::write_atomic(&dir.join(format!("pr_{tag}.csv")), &pr_csv(&report.pr_points)?)?;
    super::write_atomic(&dir.join(format!("pr_{tag}.svg")), pr_svg(report, title).as_bytes())
}
