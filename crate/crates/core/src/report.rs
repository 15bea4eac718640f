//! Report files: per-frame predictions, a summary table and an SVG timeline.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::eval::{EvalReport, Metrics};

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMELINE_FILE: &str = "timeline.svg";

fn metric(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.4}")
    }
}

/// `method,target,frame,truth,predicted,scored`; failed folds contribute no rows.
pub fn write_predictions_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "target", "frame", "truth", "predicted", "scored"])?;
    for r in reports {
        for f in r.folds.iter().filter(|f| !f.failed()) {
            for (t, (&truth, &pred)) in f.truth.iter().zip(&f.predicted).enumerate() {
                w.write_record([
                    r.method.as_str(),
                    f.target_id.as_str(),
                    &t.to_string(),
                    &truth.to_string(),
                    &pred.to_string(),
                    if f.scored[t] { "1" } else { "0" },
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `method,subject,acc,prc,rcl`: one row per target subject and an `average` row
/// per method. Failed folds show NaN and are left out of the average.
pub fn write_summary_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "subject", "acc", "prc", "rcl"])?;
    let row = |w: &mut csv::Writer<std::fs::File>, method: &str, subject: &str, m: &Metrics| {
        w.write_record([
            method,
            subject,
            &metric(m.accuracy),
            &metric(m.precision),
            &metric(m.recall),
        ])
    };
    for r in reports {
        if r.folds.is_empty() {
            continue;
        }
        for f in &r.folds {
            row(&mut w, &r.method, &f.target_id, &f.metrics)?;
        }
        row(&mut w, &r.method, "average", &r.average())?;
    }
    w.flush()?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One band per (method, target): true viability on top, prediction below,
/// excluded frames greyed out.
pub fn timeline_svg(reports: &[EvalReport]) -> String {
    const CELL: usize = 4;
    const BAND: usize = 12;
    const LEFT: usize = 190;
    let bands: Vec<_> = reports
        .iter()
        .flat_map(|r| r.folds.iter().map(move |f| (r.method.as_str(), f)))
        .collect();
    let frames = bands.iter().map(|(_, f)| f.truth.len()).max().unwrap_or(0);
    let width = LEFT + frames * CELL + 10;
    let height = 30 + bands.len() * (2 * BAND + 14);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="16" font-family="sans-serif" font-size="12">viable (green) / unviable (red); top: truth, bottom: predicted</text>"#
    );
    let color = |y: i8, scored: bool| match (scored, y) {
        (false, _) => "#cccccc",
        (true, 1) => "#2e8b57",
        (true, _) => "#c0392b",
    };
    for (b, (method, fold)) in bands.iter().enumerate() {
        let y0 = 30 + b * (2 * BAND + 14);
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}" font-family="sans-serif" font-size="11">{} / {}</text>"#,
            y0 + BAND + 4,
            escape(method),
            escape(&fold.target_id)
        );
        for (t, &y) in fold.truth.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{y0}" width="{CELL}" height="{BAND}" fill="{}"/>"#,
                LEFT + t * CELL,
                color(y, fold.scored[t])
            );
        }
        for (t, &y) in fold.predicted.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{BAND}" fill="{}"/>"#,
                LEFT + t * CELL,
                y0 + BAND + 1,
                color(y, fold.scored[t])
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the three report files into `dir`.
pub fn emit_report(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_predictions_csv(&dir.join(PREDICTIONS_FILE), reports)?;
    write_summary_csv(&dir.join(SUMMARY_FILE), reports)?;
    std::fs::write(dir.join(TIMELINE_FILE), timeline_svg(reports))?;
    Ok(())
}

/// Rebuilds reports from a predictions file, recomputing the metrics. Methods and
/// targets keep their order of first appearance.
pub fn read_predictions_csv(path: &Path) -> Result<Vec<EvalReport>> {
    use crate::error::format_err;
    use crate::eval::{metrics, FoldResult};

    let mut r = csv::Reader::from_path(path)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 6 {
            return Err(format_err(path, format!("row {}: expected 6 fields", i + 1)));
        }
        let label = |s: &str| -> Result<i8> {
            match s {
                "1" => Ok(1),
                "-1" => Ok(-1),
                other => Err(format_err(path, format!("row {}: bad label {other:?}", i + 1))),
            }
        };
        let (truth, pred) = (label(&rec[3])?, label(&rec[4])?);
        let scored = &rec[5] == "1";
        let ri = match reports.iter().position(|x| x.method == rec[0]) {
            Some(p) => p,
            None => {
                reports.push(EvalReport {
                    method: rec[0].to_string(),
                    folds: Vec::new(),
                });
                reports.len() - 1
            }
        };
        let folds = &mut reports[ri].folds;
        let fi = match folds.iter().position(|f| f.target_id == rec[1]) {
            Some(p) => p,
            None => {
                folds.push(FoldResult {
                    target_id: rec[1].to_string(),
                    source_ids: Vec::new(),
                    predicted: Vec::new(),
                    truth: Vec::new(),
                    scored: Vec::new(),
                    metrics: Metrics::nan(),
                    error: None,
                });
                folds.len() - 1
            }
        };
        let f = &mut folds[fi];
        f.truth.push(truth);
        f.predicted.push(pred);
        f.scored.push(scored);
    }
    for rep in &mut reports {
        for f in &mut rep.folds {
            let pick = |v: &[i8]| -> Vec<i8> {
                v.iter().zip(&f.scored).filter(|(_, &s)| s).map(|(&y, _)| y).collect()
            };
            let (t, p) = (pick(&f.truth), pick(&f.predicted));
            f.metrics = if t.is_empty() { Metrics::nan() } else { metrics(&t, &p)? };
        }
    }
    Ok(reports)
}
