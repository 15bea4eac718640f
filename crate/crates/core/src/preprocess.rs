//! Background removal with a fixed binary mask followed by block compression.
//!
//! Compression places one vertex at the center of each non-overlapping `w x w`
//! window (anchored at the mask's bounding box) whose center pixel lies inside the
//! mask. The vertex value is the mean of the in-mask pixels of that window, so
//! windows straddling the region boundary average only the region pixels.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{data, format_err, param, Result};
use crate::graph::{GraphSignal, IrregularGrid};
use crate::linalg::ensure_finite;

/// One raw rectangular frame (rows x columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub pixels: DMatrix<f64>,
}

impl Frame {
    pub fn new(pixels: DMatrix<f64>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(data("frame has no pixels"));
        }
        ensure_finite(pixels.as_slice(), "frame")?;
        Ok(Self { pixels })
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    /// `bits` is row-major, `height * width` long.
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(data(format!(
                "mask has {} bits, expected {height}x{width}",
                bits.len()
            )));
        }
        if !bits.iter().any(|&b| b) {
            return Err(data("mask selects no pixels"));
        }
        Ok(Self { height, width, bits })
    }

    pub fn full(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![true; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn region_size(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Inclusive `(row_min, row_max, col_min, col_max)` of the set bits.
    fn bounding_box(&self) -> (usize, usize, usize, usize) {
        let mut bb = (usize::MAX, 0, usize::MAX, 0);
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    bb.0 = bb.0.min(r);
                    bb.1 = bb.1.max(r);
                    bb.2 = bb.2.min(c);
                    bb.3 = bb.3.max(c);
                }
            }
        }
        bb
    }
}

/// A frame restricted to a mask: `None` outside the mask support.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedFrame {
    height: usize,
    width: usize,
    cells: Vec<Option<f64>>,
}

impl MaskedFrame {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.width + col]
    }

    /// Retained values in row-major order.
    pub fn retained(&self) -> Vec<f64> {
        self.cells.iter().flatten().copied().collect()
    }

    fn support(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self.cells.iter().map(Option::is_some).collect(),
        }
    }
}

pub fn apply_mask(frame: &Frame, mask: &Mask) -> Result<MaskedFrame> {
    if frame.height() != mask.height || frame.width() != mask.width {
        return Err(data(format!(
            "frame is {}x{} but mask is {}x{}",
            frame.height(),
            frame.width(),
            mask.height,
            mask.width
        )));
    }
    let mut cells = Vec::with_capacity(mask.bits.len());
    for r in 0..mask.height {
        for c in 0..mask.width {
            cells.push(mask.get(r, c).then(|| frame.pixels[(r, c)]));
        }
    }
    Ok(MaskedFrame {
        height: mask.height,
        width: mask.width,
        cells,
    })
}

/// Precomputed compression layout for one mask and window size.
///
/// Every frame compressed with the same layout yields the same grid, with
/// vertices in row-major order of their window centers.
#[derive(Debug, Clone)]
pub struct Compressor {
    mask: Mask,
    grid: IrregularGrid,
    members: Vec<Vec<(usize, usize)>>,
}

impl Compressor {
    pub fn new(mask: &Mask, window: usize) -> Result<Self> {
        if window == 0 || window.is_multiple_of(2) {
            return Err(param(format!("window must be odd and positive, got {window}")));
        }
        let half = window / 2;
        let (r0, r1, c0, c1) = mask.bounding_box();
        let mut coords = Vec::new();
        let mut members = Vec::new();
        let mut r = r0 + half;
        while r <= r1 {
            let mut c = c0 + half;
            while c <= c1 {
                if mask.get(r, c) {
                    let rows = r.saturating_sub(half)..=(r + half).min(mask.height - 1);
                    let cols = c.saturating_sub(half)..=(c + half).min(mask.width - 1);
                    let mut pix = Vec::with_capacity(window * window);
                    for rr in rows {
                        for cc in cols.clone() {
                            if mask.get(rr, cc) {
                                pix.push((rr, cc));
                            }
                        }
                    }
                    coords.push((r as i64, c as i64));
                    members.push(pix);
                }
                c += window;
            }
            r += window;
        }
        if coords.len() < 2 {
            return Err(data(format!(
                "compression with window {window} leaves {} vertices; at least 2 are required",
                coords.len()
            )));
        }
        Ok(Self {
            mask: mask.clone(),
            grid: IrregularGrid::new(coords)?,
            members,
        })
    }

    pub fn grid(&self) -> &IrregularGrid {
        &self.grid
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn apply(&self, frame: &Frame, time_index: usize) -> Result<GraphSignal> {
        if frame.height() != self.mask.height || frame.width() != self.mask.width {
            return Err(data(format!(
                "frame is {}x{} but the compression layout expects {}x{}",
                frame.height(),
                frame.width(),
                self.mask.height,
                self.mask.width
            )));
        }
        let values = DVector::from_iterator(
            self.members.len(),
            self.members.iter().map(|pix| {
                pix.iter().map(|&(r, c)| frame.pixels[(r, c)]).sum::<f64>() / pix.len() as f64
            }),
        );
        GraphSignal::new(values, time_index)
    }
}

/// Compresses one masked frame. See [`Compressor`] for the window layout.
pub fn compress(
    masked: &MaskedFrame,
    window: usize,
    time_index: usize,
) -> Result<(IrregularGrid, GraphSignal)> {
    let comp = Compressor::new(&masked.support(), window)?;
    let frame = Frame::new(DMatrix::from_fn(masked.height, masked.width, |r, c| {
        masked.get(r, c).unwrap_or(0.0)
    }))?;
    let signal = comp.apply(&frame, time_index)?;
    Ok((comp.grid, signal))
}

/// Reads a mask from a PGM (P2 or P5) or a CSV file of 0/1 values.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        parse_pgm(&bytes).map_err(|reason| format_err(path, reason))
    } else {
        let rows = read_numeric_rows(path, false)?;
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(format_err(path, "mask rows have different lengths"));
        }
        let mut bits = Vec::with_capacity(height * width);
        for v in rows.into_iter().flatten() {
            match v {
                0.0 => bits.push(false),
                1.0 => bits.push(true),
                x => return Err(format_err(path, format!("mask value {x} is not 0 or 1"))),
            }
        }
        Mask::new(height, width, bits)
    }
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Mask, String> {
    let binary = bytes.starts_with(b"P5");
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("malformed PGM header")?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("invalid PGM maxval {maxval}"));
    }
    let n = width * height;
    let values: Vec<usize> = if binary {
        pos += 1;
        let body = bytes.get(pos..).unwrap_or(&[]);
        if maxval < 256 {
            if body.len() < n {
                return Err("truncated P5 raster".into());
            }
            body[..n].iter().map(|&b| b as usize).collect()
        } else {
            if body.len() < 2 * n {
                return Err("truncated P5 raster".into());
            }
            body[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                .collect()
        }
    } else {
        let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| "P2 body is not ASCII")?;
        let vals: Vec<usize> = text
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| format!("bad P2 value {t:?}")))
            .collect::<std::result::Result<_, _>>()?;
        if vals.len() < n {
            return Err("truncated P2 raster".into());
        }
        vals[..n].to_vec()
    };
    Mask::new(height, width, values.iter().map(|&v| v > 0).collect()).map_err(|e| e.to_string())
}

/// Reads headerless numeric CSV rows (optionally skipping a header line).
pub(crate) fn read_numeric_rows(path: &Path, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| format_err(path, format!("row {}: {f:?} is not a number", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads raw frames of the given shape.
///
/// `path` is either a directory of per-frame CSV files (sorted by file name, which
/// should be the zero-padded time index) or a single CSV with one flattened
/// row-major frame per line.
pub fn read_frames(path: &Path, height: usize, width: usize) -> Result<Vec<Frame>> {
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|f| {
                let rows = read_numeric_rows(f, false)?;
                if rows.len() != height || rows.iter().any(|r| r.len() != width) {
                    return Err(format_err(f, format!("expected a {height}x{width} frame")));
                }
                Frame::new(DMatrix::from_row_iterator(
                    height,
                    width,
                    rows.into_iter().flatten(),
                ))
            })
            .collect()
    } else {
        read_numeric_rows(path, false)?
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != height * width {
                    return Err(format_err(
                        path,
                        format!("row {} has {} values, expected {}", i + 1, row.len(), height * width),
                    ));
                }
                Frame::new(DMatrix::from_row_slice(height, width, &row))
            })
            .collect()
    }
}
