//! CSV formats for signals, features and labeled subject streams.
//! Column layouts are documented in `docs/formats.md`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{data, format_err, Result};
use crate::eval::SubjectStream;
use crate::graph::{GraphSignal, IrregularGrid};
use crate::preprocess::{Frame, Mask};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn fmt(v: f64) -> String {
    // Shortest representation that parses back to the same f64.
    format!("{v:?}")
}

fn parse(path: &Path, row: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| format_err(path, format!("row {row}: not a number: {field:?}")))
}

/// `frame,v1,...,vM`, one row per compressed frame.
pub fn write_signals_csv(path: &Path, signals: &[GraphSignal]) -> Result<()> {
    let m = signals.first().map_or(0, GraphSignal::len);
    let mut w = writer(path)?;
    let mut header = vec!["frame".to_string()];
    header.extend((1..=m).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for s in signals {
        if s.len() != m {
            return Err(data("signals have different vertex counts"));
        }
        let mut rec = vec![s.time_index.to_string()];
        rec.extend(s.values.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_signals_csv(path: &Path) -> Result<Vec<GraphSignal>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(format_err(path, format!("row {}: no vertex values", i + 1)));
        }
        let t = parse(path, i + 1, &rec[0])? as usize;
        let values = rec
            .iter()
            .skip(1)
            .map(|f| parse(path, i + 1, f))
            .collect::<Result<Vec<_>>>()?;
        out.push(GraphSignal::new(DVector::from_vec(values), t)?);
    }
    Ok(out)
}

/// `row,col` pixel coordinates of each vertex, in vertex order.
pub fn write_grid_csv(path: &Path, grid: &IrregularGrid) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["row", "col"])?;
    for &(r, c) in grid.coords() {
        w.write_record([r.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_csv(path: &Path) -> Result<IrregularGrid> {
    let mut r = csv::Reader::from_path(path)?;
    let mut coords = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<i64> {
            rec.get(k)
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| format_err(path, format!("row {}: bad coordinate", i + 1)))
        };
        coords.push((field(0)?, field(1)?));
    }
    IrregularGrid::new(coords)
}

/// `frame,f1,...,fD`.
pub fn write_features_csv(path: &Path, features: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["frame".to_string()];
    header.extend((1..=features.ncols()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for (t, row) in features.row_iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `frame,f1,...,fD`; the frame column is ignored beyond validation.
pub fn read_features_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let d = r.headers()?.len().saturating_sub(1);
    if d == 0 {
        return Err(format_err(path, "no feature columns"));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(format_err(path, format!("row {}: expected {} fields", i + 1, d + 1)));
        }
        for f in rec.iter().skip(1) {
            values.push(parse(path, i + 1, f)?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, d, &values))
}

/// Headerless combined frame file: one flattened row-major frame per line.
pub fn write_frames_csv(path: &Path, frames: &[Frame]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for f in frames {
        let rec: Vec<String> = f.pixels.transpose().iter().map(|&v| fmt(v)).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Headerless grid of 0/1 values, one line per mask row.
pub fn write_mask_csv(path: &Path, mask: &Mask) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for r in 0..mask.height() {
        let rec: Vec<&str> = (0..mask.width())
            .map(|c| if mask.get(r, c) { "1" } else { "0" })
            .collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `frame,label,excluded,f1,...,fD`.
pub fn write_stream_csv(path: &Path, stream: &SubjectStream) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["frame".to_string(), "label".into(), "excluded".into()];
    header.extend((1..=stream.features.ncols()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for (t, row) in stream.features.row_iter().enumerate() {
        let mut rec = vec![
            t.to_string(),
            stream.labels[t].to_string(),
            u8::from(!stream.is_scored(t)).to_string(),
        ];
        rec.extend(row.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a labeled stream. The excluded frames must form one contiguous block.
pub fn read_stream_csv(path: &Path, id: &str, cadence_minutes: usize) -> Result<SubjectStream> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 4 || &header[1] != "label" || &header[2] != "excluded" {
        return Err(format_err(path, "expected columns frame,label,excluded,f1,..."));
    }
    let d = header.len() - 3;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut excluded = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 3 {
            return Err(format_err(path, format!("row {}: expected {} fields", i + 1, d + 3)));
        }
        let label = match rec[1].trim() {
            "1" | "+1" => 1,
            "-1" => -1,
            other => return Err(format_err(path, format!("row {}: bad label {other:?}", i + 1))),
        };
        let ex = match rec[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(format_err(path, format!("row {}: bad excluded flag {other:?}", i + 1)))
            }
        };
        labels.push(label);
        excluded.push(ex);
        for f in rec.iter().skip(3) {
            values.push(parse(path, i + 1, f)?);
        }
    }
    let first = excluded.iter().position(|&e| e).unwrap_or(0);
    let count = excluded.iter().filter(|&&e| e).count();
    if excluded[first..first + count].iter().any(|&e| !e) {
        return Err(format_err(path, "excluded frames are not contiguous"));
    }
    let n = labels.len();
    SubjectStream::new(
        id,
        DMatrix::from_row_slice(n, d, &values),
        labels,
        cadence_minutes,
        first..first + count,
    )
}
