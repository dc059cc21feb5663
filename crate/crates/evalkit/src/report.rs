//! Table-style reports with curve CSV and SVG export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{auc, threshold_curve, EvalRecord};
use crate::EvalError;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    /// Pass-rate threshold, meters.
    pub threshold: f64,
    /// Upper end of the AUC integration range, meters.
    pub auc_max: f64,
    pub steps: usize,
    /// Classes whose rows get a note that plain ADD ignores their symmetry.
    pub symmetric_classes: Vec<String>,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            threshold: 0.02,
            auc_max: 0.10,
            steps: 100,
            symmetric_classes: vec!["mug".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub object: String,
    pub add_pass_rate: f64,
    pub auc: f64,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub threshold: f64,
    pub auc_max: f64,
    pub steps: usize,
    pub rows: Vec<ReportRow>,
}

pub type Curves = BTreeMap<String, Vec<(f64, f64)>>;

fn value_at(curve: &[(f64, f64)], object: &str, threshold: f64) -> Result<f64, EvalError> {
    curve
        .iter()
        .find(|(t, _)| (*t - threshold).abs() <= 1e-12)
        .map(|&(_, a)| a)
        .ok_or_else(|| EvalError::OffGrid {
            object: object.to_string(),
            threshold,
        })
}

fn symmetric_note(object: &str, settings: &ReportSettings) -> Option<String> {
    settings
        .symmetric_classes
        .iter()
        .any(|c| c == object)
        .then(|| "symmetric object scored with plain ADD".to_string())
}

/// One row per object, sorted by name, plus each object's curve. The pass
/// rate is read off the curve, so the threshold must be a grid point.
pub fn make_report(records: &[EvalRecord], settings: &ReportSettings) -> Result<(EvalReport, Curves), EvalError> {
    let mut by_object: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_object.entry(r.class_name.as_str()).or_default().push(r.distance);
    }
    if by_object.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut rows = Vec::new();
    let mut curves = Curves::new();
    for (object, distances) in by_object {
        let curve = threshold_curve(&distances, settings.auc_max, settings.steps)?;
        rows.push(ReportRow {
            object: object.to_string(),
            add_pass_rate: value_at(&curve, object, settings.threshold)?,
            auc: auc(&curve),
            samples: distances.len(),
            note: symmetric_note(object, settings),
        });
        curves.insert(object.to_string(), curve);
    }
    Ok((
        EvalReport {
            schema: REPORT_SCHEMA,
            threshold: settings.threshold,
            auc_max: settings.auc_max,
            steps: settings.steps,
            rows,
        },
        curves,
    ))
}

/// Pass rate and AUC recomputed from exported curves.
pub fn report_from_curves(curves: &Curves, threshold: f64) -> Result<Vec<(String, f64, f64)>, EvalError> {
    curves
        .iter()
        .map(|(object, curve)| Ok((object.clone(), value_at(curve, object, threshold)?, auc(curve))))
        .collect()
}

pub fn format_table(report: &EvalReport) -> String {
    let width = report.rows.iter().map(|r| r.object.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let add_header = format!("ADD@{}cm", report.threshold * 100.0);
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>7}  {:>6}  note", "object", add_header, "AUC", "n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.3}  {:>7.2}  {:>6}  {}",
            r.object,
            r.add_pass_rate,
            r.auc,
            r.samples,
            r.note.as_deref().unwrap_or("")
        );
    }
    out
}

pub fn write_curves(curves: &Curves, path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["object", "threshold", "accuracy"])?;
    for (object, curve) in curves {
        for (t, a) in curve {
            w.write_record([object.clone(), t.to_string(), a.to_string()])?;
        }
    }
    w.flush().map_err(|e| EvalError::io(path, e))
}

pub fn read_curves(path: &Path) -> Result<Curves, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["object", "threshold", "accuracy"] {
        return Err(EvalError::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header {headers:?}"),
        });
    }
    let mut curves = Curves::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64, EvalError> {
            rec[i].parse().map_err(|_| EvalError::Format {
                path: path.to_path_buf(),
                message: format!("row {}: bad number {:?}", line + 1, &rec[i]),
            })
        };
        curves.entry(rec[0].to_string()).or_default().push((parse(1)?, parse(2)?));
    }
    Ok(curves)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Accuracy-vs-threshold plot with the pass-rate threshold marked.
pub fn render_svg(curves: &Curves, threshold: f64, auc_max: f64) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 160.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |t: f64| left + t / auc_max * pw;
    let sy = |a: f64| top + (1.0 - a) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=5 {
        let t = auc_max * i as f64 / 5.0;
        let a = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            sx(t),
            top + ph + 18.0,
            t * 100.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{a:.1}</text>"#,
            left - 6.0,
            sy(a) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">ADD threshold (cm)</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let tx = sx(threshold);
    let _ = writeln!(
        s,
        r#"<line x1="{tx:.1}" y1="{top}" x2="{tx:.1}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
        top + ph
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" fill="gray">{} cm</text>"#,
        tx + 4.0,
        top + 12.0,
        threshold * 100.0
    );
    for (i, (object, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = curve.iter().map(|&(t, a)| format!("{:.2},{:.2}", sx(t), sy(a))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = top + 16.0 * i as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            left + pw + 10.0,
            left + pw + 30.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, left + pw + 36.0, ly + 4.0, xml_escape(object));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `report.json`, `report.txt`, `curves.csv` and `curves.svg`.
pub fn write_report(dir: &Path, report: &EvalReport, curves: &Curves) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| EvalError::io(p, e))
    };
    write("report.json", &json)?;
    write("report.txt", &format_table(report))?;
    write_curves(curves, &dir.join("curves.csv"))?;
    write("curves.svg", &render_svg(curves, report.threshold, report.auc_max))
}
