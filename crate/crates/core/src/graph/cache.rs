//! Binary graph cache.
//!
//! Layout (all little-endian):
//!
//! | field        | type                 |
//! |--------------|----------------------|
//! | magic        | 8 bytes `ONDAGRPH`   |
//! | version      | u32                  |
//! | vertices M   | u64                  |
//! | sigma        | f64                  |
//! | coords       | M x (i64 row, i64 col) |
//! | eigenvalues  | M x f64              |
//! | eigenvectors | M x M f64, row-major |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use super::{EigenBasis, GraphModel, IrregularGrid, MAX_DENSE_VERTICES};
use crate::error::{format_err, Result};

pub const GRAPH_CACHE_MAGIC: &[u8; 8] = b"ONDAGRPH";
pub const GRAPH_CACHE_VERSION: u32 = 1;

pub fn write_graph_cache(path: &Path, model: &GraphModel) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_graph(&mut out, model)?;
    out.flush()?;
    Ok(())
}

pub fn read_graph_cache(path: &Path) -> Result<GraphModel> {
    let mut input = BufReader::new(File::open(path)?);
    read_graph(&mut input).map_err(|e| match e {
        crate::Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            format_err(path, "truncated graph cache")
        }
        crate::Error::Format { reason, .. } => format_err(path, reason),
        other => other,
    })
}

pub(crate) fn write_graph<W: Write>(out: &mut W, model: &GraphModel) -> Result<()> {
    let m = model.basis.dim();
    out.write_all(GRAPH_CACHE_MAGIC)?;
    out.write_u32::<LittleEndian>(GRAPH_CACHE_VERSION)?;
    out.write_u64::<LittleEndian>(m as u64)?;
    out.write_f64::<LittleEndian>(model.sigma)?;
    for &(r, c) in model.grid.coords() {
        out.write_i64::<LittleEndian>(r)?;
        out.write_i64::<LittleEndian>(c)?;
    }
    for &v in model.basis.eigenvalues.iter() {
        out.write_f64::<LittleEndian>(v)?;
    }
    for i in 0..m {
        for j in 0..m {
            out.write_f64::<LittleEndian>(model.basis.eigenvectors[(i, j)])?;
        }
    }
    Ok(())
}

pub(crate) fn read_graph<R: Read>(input: &mut R) -> Result<GraphModel> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != GRAPH_CACHE_MAGIC {
        return Err(format_err("<graph cache>", "bad magic; not a graph cache"));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != GRAPH_CACHE_VERSION {
        return Err(format_err(
            "<graph cache>",
            format!("unsupported graph cache version {version}"),
        ));
    }
    let m = input.read_u64::<LittleEndian>()? as usize;
    if !(2..=MAX_DENSE_VERTICES).contains(&m) {
        return Err(format_err("<graph cache>", format!("implausible vertex count {m}")));
    }
    let sigma = input.read_f64::<LittleEndian>()?;
    let mut coords = Vec::with_capacity(m);
    for _ in 0..m {
        let r = input.read_i64::<LittleEndian>()?;
        let c = input.read_i64::<LittleEndian>()?;
        coords.push((r, c));
    }
    let grid = IrregularGrid::new(coords)
        .map_err(|e| format_err("<graph cache>", e.to_string()))?;
    let mut values = vec![0.0; m];
    input.read_f64_into::<LittleEndian>(&mut values)?;
    let mut rows = vec![0.0; m * m];
    input.read_f64_into::<LittleEndian>(&mut rows)?;
    Ok(GraphModel {
        grid,
        sigma,
        basis: EigenBasis {
            eigenvectors: DMatrix::from_row_slice(m, m, &rows),
            eigenvalues: DVector::from_vec(values),
        },
    })
}
