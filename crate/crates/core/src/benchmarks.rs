//! Comparison methods: kernel SVM with and without feature normalization, subspace
//! alignment offline and online, and majority voting over single-source runs.

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{data, param, Result};
use crate::linalg::sym_eigen_ascending;
use crate::onda::Label;
use crate::svm::{HuberSvm, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkMethod {
    SvmOffline,
    SvmOnline,
    SaOffline,
    SaOnline,
}

impl BenchmarkMethod {
    pub const ALL: [BenchmarkMethod; 4] = [
        BenchmarkMethod::SvmOffline,
        BenchmarkMethod::SvmOnline,
        BenchmarkMethod::SaOffline,
        BenchmarkMethod::SaOnline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkMethod::SvmOffline => "svm_offline",
            BenchmarkMethod::SvmOnline => "svm_online",
            BenchmarkMethod::SaOffline => "sa_offline",
            BenchmarkMethod::SaOnline => "sa_online",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| param(format!("unknown benchmark method {s:?}")))
    }

    pub fn uses_subspace(&self) -> bool {
        matches!(self, BenchmarkMethod::SaOffline | BenchmarkMethod::SaOnline)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub method: BenchmarkMethod,
    pub subspace_dim: usize,
    pub svm: SvmParams,
}

impl BenchmarkConfig {
    pub fn new(method: BenchmarkMethod) -> Self {
        Self {
            method,
            subspace_dim: 10,
            svm: SvmParams::default(),
        }
    }

    /// Predicts every target row. Online methods only look at rows up to the one
    /// being predicted.
    pub fn run(&self, source: &DMatrix<f64>, labels: &[Label], target: &DMatrix<f64>) -> Result<Vec<Label>> {
        if self.method.uses_subspace()
            && (self.subspace_dim == 0 || self.subspace_dim > source.ncols()) {
                return Err(param(format!(
                    "subspace dimension {} outside 1..={}",
                    self.subspace_dim,
                    source.ncols()
                )));
            }
        match self.method {
            BenchmarkMethod::SvmOffline => svm_offline(source, labels, target, &self.svm),
            BenchmarkMethod::SvmOnline => svm_online(source, labels, target, &self.svm),
            BenchmarkMethod::SaOffline => sa_offline(source, labels, target, self.subspace_dim, &self.svm),
            BenchmarkMethod::SaOnline => sa_online(source, labels, target, self.subspace_dim, &self.svm),
        }
    }
}

fn check_pair(source: &DMatrix<f64>, labels: &[Label], target: &DMatrix<f64>) -> Result<()> {
    if labels.len() != source.nrows() {
        return Err(data(format!(
            "{} labels for {} source rows",
            labels.len(),
            source.nrows()
        )));
    }
    if target.nrows() > 0 && target.ncols() != source.ncols() {
        return Err(data(format!(
            "source has {} features but target has {}",
            source.ncols(),
            target.ncols()
        )));
    }
    Ok(())
}

/// Per-column mean and standard deviation over the stacked rows of `parts`.
fn pooled_moments(parts: &[&DMatrix<f64>]) -> (DVector<f64>, DVector<f64>) {
    let d = parts[0].ncols();
    let n: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut mean = DVector::zeros(d);
    for p in parts {
        for row in p.row_iter() {
            mean += row.transpose();
        }
    }
    mean /= n as f64;
    let mut var = DVector::zeros(d);
    for p in parts {
        for row in p.row_iter() {
            let diff = row.transpose() - &mean;
            var += diff.component_mul(&diff);
        }
    }
    var /= n as f64;
    (mean, var.map(f64::sqrt))
}

fn standardize(x: &DMatrix<f64>, mean: &DVector<f64>, std: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let c = x[(i, j)] - mean[j];
        // Zero-variance columns are only centered.
        if std[j] > 1e-12 {
            c / std[j]
        } else {
            c
        }
    })
}

/// Z-normalizes each feature over the pooled source and target rows, then trains on
/// the source and predicts the whole target.
pub fn svm_offline(
    source: &DMatrix<f64>,
    labels: &[Label],
    target: &DMatrix<f64>,
    params: &SvmParams,
) -> Result<Vec<Label>> {
    check_pair(source, labels, target)?;
    if target.nrows() == 0 {
        return Ok(Vec::new());
    }
    let (mean, std) = pooled_moments(&[source, target]);
    let svm = HuberSvm::fit(&standardize(source, &mean, &std), labels, params)?;
    svm.predict(&standardize(target, &mean, &std))
}

/// Trains once on raw source features and labels each target row as it arrives.
pub fn svm_online(
    source: &DMatrix<f64>,
    labels: &[Label],
    target: &DMatrix<f64>,
    params: &SvmParams,
) -> Result<Vec<Label>> {
    check_pair(source, labels, target)?;
    if target.nrows() == 0 {
        return Ok(Vec::new());
    }
    let svm = HuberSvm::fit(source, labels, params)?;
    svm.predict(target)
}

/// Centered principal directions of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    pub mean: DVector<f64>,
    /// Columns are principal directions, leading variance first.
    pub basis: DMatrix<f64>,
}

impl Subspace {
    /// Top `dim` principal directions; fewer if the centered data has lower rank.
    pub fn fit(x: &DMatrix<f64>, dim: usize) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(data("need at least 2 samples for a subspace"));
        }
        if dim == 0 {
            return Err(param("subspace dimension must be at least 1"));
        }
        let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mean[j]);
        let cov = centered.tr_mul(&centered) / (x.nrows() - 1) as f64;
        let (values, vectors) = sym_eigen_ascending(&cov);
        let d = values.len();
        let top = values[d - 1];
        let rank = values.iter().filter(|&&v| v > 1e-10 * top.max(f64::MIN_POSITIVE)).count();
        if rank == 0 {
            return Err(data("samples have no variance; subspace undefined"));
        }
        let used = dim.min(rank);
        if used < dim {
            debug!("subspace dimension reduced from {dim} to {used} (rank {rank})");
        }
        let basis = DMatrix::from_fn(x.ncols(), used, |i, j| vectors[(i, d - 1 - j)]);
        Ok(Self { mean, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `(x - mean) * basis` for each row.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - self.mean[j]);
        centered * &self.basis
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Source rows in the target-aligned coordinates `X_S M`.
    pub source: DMatrix<f64>,
    /// Target rows in the target subspace `X_T`.
    pub target: DMatrix<f64>,
    /// `M = X_S^T X_T`.
    pub transform: DMatrix<f64>,
}

/// Aligns the source principal subspace to the target one.
pub fn subspace_align(source: &DMatrix<f64>, target: &DMatrix<f64>, dim: usize) -> Result<Alignment> {
    let src = Subspace::fit(source, dim)?;
    let tgt = Subspace::fit(target, dim)?;
    Ok(align_with(&src, &tgt, source, target))
}

fn align_with(
    src: &Subspace,
    tgt: &Subspace,
    source: &DMatrix<f64>,
    target: &DMatrix<f64>,
) -> Alignment {
    let d = src.dim().min(tgt.dim());
    let xs = src.basis.columns(0, d);
    let xt = tgt.basis.columns(0, d);
    let transform = xs.tr_mul(&xt);
    Alignment {
        source: src.project(source).columns(0, d) * &transform,
        target: tgt.project(target).columns(0, d).into_owned(),
        transform,
    }
}

/// Subspace alignment on the full target followed by the SVM.
pub fn sa_offline(
    source: &DMatrix<f64>,
    labels: &[Label],
    target: &DMatrix<f64>,
    dim: usize,
    params: &SvmParams,
) -> Result<Vec<Label>> {
    check_pair(source, labels, target)?;
    if target.nrows() == 0 {
        return Ok(Vec::new());
    }
    if target.nrows() < 2 {
        return svm_online(source, labels, target, params);
    }
    let al = subspace_align(source, target, dim)?;
    let svm = HuberSvm::fit(&al.source, labels, params)?;
    svm.predict(&al.target)
}

/// Re-aligns on every arriving target row and classifies it with a freshly trained
/// SVM. Until `dim` target rows have arrived the raw-feature SVM is used.
pub fn sa_online(
    source: &DMatrix<f64>,
    labels: &[Label],
    target: &DMatrix<f64>,
    dim: usize,
    params: &SvmParams,
) -> Result<Vec<Label>> {
    check_pair(source, labels, target)?;
    let n = target.nrows();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    let bootstrap = dim.max(2);
    let raw = HuberSvm::fit(source, labels, params)?;
    let src = Subspace::fit(source, dim)?;
    let mut warm: Option<DVector<f64>> = None;
    for i in 0..n {
        let seen = target.rows(0, i + 1).into_owned();
        if i + 1 < bootstrap {
            out.push(raw.predict(&seen.rows(i, 1).into_owned())?[0]);
            continue;
        }
        let tgt = Subspace::fit(&seen, dim)?;
        let al = align_with(&src, &tgt, source, &seen);
        let cfg = crate::kernel::KernelConfig::median_heuristic(&al.source)?;
        let svm = HuberSvm::fit_with_kernel(&al.source, labels, params, cfg, warm.as_ref())?;
        out.push(svm.predict(&al.target.rows(i, 1).into_owned())?[0]);
        warm = Some(svm.coeffs().clone());
    }
    Ok(out)
}

/// Strict majority of `votes`; an even split goes to `-1`.
pub fn majority_vote(votes: &[Label]) -> Result<Label> {
    if votes.is_empty() {
        return Err(data("majority vote over an empty set"));
    }
    let pos = votes.iter().filter(|&&v| v > 0).count();
    Ok(if 2 * pos > votes.len() { 1 } else { -1 })
}

/// Picks the subspace dimension with the best mean accuracy when each domain in turn
/// is the target of every other one. Ties go to the smaller dimension.
pub fn tune_sa_dim(
    domains: &[(DMatrix<f64>, Vec<Label>)],
    grid: &[usize],
    params: &SvmParams,
) -> Result<usize> {
    if grid.is_empty() {
        return Err(param("empty subspace-dimension grid"));
    }
    if domains.len() < 2 {
        return Err(data("tuning the subspace dimension needs at least 2 domains"));
    }
    let mut best: Option<(f64, usize)> = None;
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &d in &sorted {
        let mut total = 0.0;
        let mut count = 0usize;
        for (h, (tx, ty)) in domains.iter().enumerate() {
            for (s, (sx, sy)) in domains.iter().enumerate() {
                if s == h {
                    continue;
                }
                let pred = sa_offline(sx, sy, tx, d.min(sx.ncols()), params)?;
                total += pred.iter().zip(ty).filter(|(a, b)| a == b).count() as f64;
                count += ty.len();
            }
        }
        let acc = total / count.max(1) as f64;
        if best.is_none_or(|(b, _)| acc > b) {
            best = Some((acc, d));
        }
    }
    Ok(best.unwrap().1)
}
