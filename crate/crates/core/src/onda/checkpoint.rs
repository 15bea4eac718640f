//! Versioned binary checkpoint of a [`DaState`].
//!
//! Layout (little-endian): magic `ONDACKPT`, u32 version, hyperparameters
//! (f64 x 10 with NaN for an automatic gamma, u64 x 3, u8 init), f64 gamma, u64 time index, u64 N_S, u64 N_T,
//! u64 feature dim, stacked features (N x D, row-major), N_S f64 labels,
//! u64 r + V (N_S x r), u64 m + W and anchor (N x m each), u (r + 1),
//! u64 P + pending target rows (P x D).
//! The source kernel spectrum is recomputed on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use super::{ClassifierCoeffs, DaState, Hyperparams, MappingInit};
use crate::error::{format_err, Result};
use crate::kernel::{JointKernel, KernelConfig, KernelSpectrum, LowRankFactor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ONDACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_DIM: u64 = 1 << 20;

pub fn write_checkpoint(path: &Path, state: &DaState) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_state(&mut out, state)?;
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<DaState> {
    let mut input = BufReader::new(File::open(path)?);
    read_state(&mut input).map_err(|e| match e {
        crate::Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            format_err(path, "truncated checkpoint")
        }
        crate::Error::Format { reason, .. } => format_err(path, reason),
        other => other,
    })
}

fn write_matrix<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_f64::<LittleEndian>(m[(i, j)])?;
        }
    }
    Ok(())
}

fn read_matrix<R: Read>(input: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = input.read_f64::<LittleEndian>()?;
        }
    }
    Ok(m)
}

fn read_dim<R: Read>(input: &mut R, what: &str) -> Result<usize> {
    let v = input.read_u64::<LittleEndian>()?;
    if v > MAX_DIM {
        return Err(format_err("<checkpoint>", format!("implausible {what} {v}")));
    }
    Ok(v as usize)
}

pub(crate) fn write_state<W: Write>(out: &mut W, s: &DaState) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    let hp = &s.hp;
    for v in [
        hp.lambda,
        hp.lambda1,
        hp.lambda2,
        hp.delta,
        hp.lipschitz_u,
        hp.lipschitz_w,
        hp.extrapolation_u,
        hp.extrapolation_w,
        hp.tol,
        hp.gamma.unwrap_or(f64::NAN),
    ] {
        out.write_f64::<LittleEndian>(v)?;
    }
    for v in [hp.rank, hp.latent_dim, hp.iters] {
        out.write_u64::<LittleEndian>(v as u64)?;
    }
    out.write_u8(match hp.mapping_init {
        MappingInit::ScaledIdentity => 0,
        MappingInit::KernelWhitening => 1,
    })?;
    out.write_f64::<LittleEndian>(s.kernel.config().gamma())?;
    out.write_u64::<LittleEndian>(s.time_index as u64)?;
    out.write_u64::<LittleEndian>(s.n_source() as u64)?;
    out.write_u64::<LittleEndian>(s.n_target() as u64)?;
    out.write_u64::<LittleEndian>(s.kernel.feature_dim() as u64)?;
    write_matrix(out, &s.kernel.points().transpose())?;
    for &y in s.labels.iter() {
        out.write_f64::<LittleEndian>(y)?;
    }
    out.write_u64::<LittleEndian>(s.factor.rank() as u64)?;
    write_matrix(out, &s.factor.v)?;
    out.write_u64::<LittleEndian>(s.w.ncols() as u64)?;
    write_matrix(out, &s.w)?;
    write_matrix(out, &s.w_anchor)?;
    for &v in s.coeffs.u.iter() {
        out.write_f64::<LittleEndian>(v)?;
    }
    out.write_u64::<LittleEndian>(s.pending.nrows() as u64)?;
    write_matrix(out, &s.pending)?;
    Ok(())
}

pub(crate) fn read_state<R: Read>(input: &mut R) -> Result<DaState> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(format_err("<checkpoint>", "bad magic; not a model checkpoint"));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err(
            "<checkpoint>",
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let mut reals = [0.0; 10];
    for v in reals.iter_mut() {
        *v = input.read_f64::<LittleEndian>()?;
    }
    let rank = read_dim(input, "rank")?;
    let latent_dim = read_dim(input, "latent dim")?;
    let iters = input.read_u64::<LittleEndian>()? as usize;
    let mapping_init = match input.read_u8()? {
        0 => MappingInit::ScaledIdentity,
        1 => MappingInit::KernelWhitening,
        other => {
            return Err(format_err("<checkpoint>", format!("unknown mapping init tag {other}")))
        }
    };
    let hp = Hyperparams {
        lambda: reals[0],
        lambda1: reals[1],
        lambda2: reals[2],
        delta: reals[3],
        lipschitz_u: reals[4],
        lipschitz_w: reals[5],
        extrapolation_u: reals[6],
        extrapolation_w: reals[7],
        tol: reals[8],
        rank,
        latent_dim,
        iters,
        mapping_init,
        gamma: if reals[9].is_nan() { None } else { Some(reals[9]) },
    };
    hp.validate()
        .map_err(|e| format_err("<checkpoint>", format!("invalid hyperparameters: {e}")))?;
    let gamma = input.read_f64::<LittleEndian>()?;
    let cfg = KernelConfig::new(gamma)
        .map_err(|e| format_err("<checkpoint>", format!("invalid gamma: {e}")))?;
    let time_index = input.read_u64::<LittleEndian>()? as usize;
    let ns = read_dim(input, "source count")?;
    let nt = read_dim(input, "target count")?;
    let dim = read_dim(input, "feature dimension")?;
    if ns < 2 || dim == 0 {
        return Err(format_err("<checkpoint>", "empty source set"));
    }
    let features = read_matrix(input, ns + nt, dim)?;
    let labels = DVector::from_iterator(
        ns,
        (0..ns).map(|_| input.read_f64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?,
    );
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(format_err("<checkpoint>", "labels must be +1 or -1"));
    }
    let r = read_dim(input, "factor rank")?;
    let v = read_matrix(input, ns, r)?;
    let m = read_dim(input, "mapping columns")?;
    let w = read_matrix(input, ns + nt, m)?;
    let w_anchor = read_matrix(input, ns + nt, m)?;
    let u = DVector::from_iterator(
        r + 1,
        (0..=r).map(|_| input.read_f64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?,
    );
    let p = read_dim(input, "pending row count")?;
    let pending = read_matrix(input, p, dim)?;

    let source = features.rows(0, ns).into_owned();
    let target = features.rows(ns, nt).into_owned();
    let kernel = JointKernel::new(&source, &target, cfg)?;
    let spectrum = KernelSpectrum::new(&kernel.source_block())?;
    let factor = LowRankFactor { v };
    let x_tilde = super::assemble_x_tilde(&labels, &factor);
    Ok(DaState {
        hp,
        kernel,
        labels,
        spectrum,
        factor,
        x_tilde,
        coeffs: ClassifierCoeffs { u },
        w,
        w_anchor,
        time_index,
        pending,
    })
}
