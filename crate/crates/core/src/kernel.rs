//! Gaussian kernels, low-rank factorization of the source kernel, and the
//! empirical maximum mean discrepancy between source and target samples.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{data, param, Result};
use crate::linalg::{ensure_finite, median, sym_eigen_ascending};

/// Bandwidth `gamma` of `k(a, b) = exp(-|a - b|^2 / gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    gamma: f64,
}

impl KernelConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(param(format!("kernel bandwidth must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Median of pairwise squared distances between the rows of `features`.
    pub fn median_heuristic(features: &DMatrix<f64>) -> Result<Self> {
        let pts = features.transpose();
        let n = pts.ncols();
        if n < 2 {
            return Err(data("median heuristic needs at least 2 samples"));
        }
        let mut d = Vec::with_capacity(n * (n - 1) / 2);
        for j in 0..n {
            for i in (j + 1)..n {
                d.push(sq_dist(pts.column(i), pts.column(j)));
            }
        }
        let med = median(&mut d).unwrap_or(0.0);
        Self::new(if med > 0.0 { med } else { 1.0 })
    }

    #[inline]
    pub(crate) fn eval_sq(&self, sq: f64) -> f64 {
        (-sq / self.gamma).exp()
    }
}

#[inline]
pub(crate) fn sq_dist(a: DVectorView<f64>, b: DVectorView<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn gaussian_kernel(a: &[f64], b: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(data(format!(
            "kernel arguments have dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(cfg.eval_sq(sq))
}

/// Kernel matrix between the rows of `a` and the rows of `b`.
pub fn cross_kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(data(format!(
            "feature dimensions differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (pa, pb) = (a.transpose(), b.transpose());
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        cfg.eval_sq(sq_dist(pa.column(i), pb.column(j)))
    }))
}

/// Symmetric kernel matrix over the rows of `x`.
pub fn kernel_matrix(x: &DMatrix<f64>, cfg: &KernelConfig) -> DMatrix<f64> {
    let pts = x.transpose();
    let n = pts.ncols();
    let mut k = DMatrix::identity(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let v = cfg.eval_sq(sq_dist(pts.column(i), pts.column(j)));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Rank-`r` factor `V` with `V V^T ~ K_SS`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    pub v: DMatrix<f64>,
}

impl LowRankFactor {
    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    /// `||V V^T - K||_F / ||K||_F`.
    pub fn relative_error(&self, k: &DMatrix<f64>) -> f64 {
        let approx = &self.v * self.v.transpose();
        (approx - k).norm() / k.norm().max(f64::MIN_POSITIVE)
    }
}

/// Full eigendecomposition of a PSD kernel matrix, eigenvalues descending.
///
/// Serves both the truncated factorization and the linear solves used to map
/// classifier coefficients back to kernel-expansion weights.
#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// Condition number above which [`KernelSpectrum::solve`] switches to a ridge.
pub const SOLVE_CONDITION_LIMIT: f64 = 1e12;
/// Tikhonov ridge used by [`KernelSpectrum::solve`] on ill-conditioned kernels.
pub const SOLVE_RIDGE: f64 = 1e-8;

impl KernelSpectrum {
    pub fn new(k: &DMatrix<f64>) -> Result<Self> {
        if k.nrows() != k.ncols() || k.nrows() == 0 {
            return Err(data(format!("kernel must be square and non-empty, got {}x{}", k.nrows(), k.ncols())));
        }
        ensure_finite(k.as_slice(), "kernel matrix")?;
        let scale = k.amax().max(1.0);
        if crate::linalg::asymmetry(k) > 1e-8 * scale {
            return Err(data("kernel matrix is not symmetric"));
        }
        let (mut values, mut vectors) = sym_eigen_ascending(k);
        let n = values.len();
        if values[0] < -1e-8 * values[n - 1].abs().max(1.0) {
            return Err(data(format!(
                "kernel matrix is not positive semidefinite (smallest eigenvalue {:e})",
                values[0]
            )));
        }
        values.as_mut_slice().reverse();
        let rev: Vec<_> = (0..n).rev().map(|j| vectors.column(j).into_owned()).collect();
        vectors = DMatrix::from_columns(&rev);
        Ok(Self { values, vectors })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// `V = F_r diag(sqrt(lambda_r))` from the top `r` eigenpairs.
    pub fn factor(&self, rank: usize) -> Result<LowRankFactor> {
        let n = self.values.len();
        if rank == 0 || rank > n {
            return Err(param(format!("rank must be in 1..={n}, got {rank}")));
        }
        let mut v = self.vectors.columns(0, rank).into_owned();
        for (j, mut col) in v.column_iter_mut().enumerate() {
            col *= self.values[j].max(0.0).sqrt();
        }
        Ok(LowRankFactor { v })
    }

    pub fn condition(&self) -> f64 {
        let n = self.values.len();
        let lo = self.values[n - 1];
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            self.values[0] / lo
        }
    }

    /// Solves `K y = rhs`, adding a small ridge when `K` is ill-conditioned.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let ridge = if self.condition() > SOLVE_CONDITION_LIMIT {
            SOLVE_RIDGE
        } else {
            0.0
        };
        let mut coeffs = self.vectors.tr_mul(rhs);
        for (c, &lam) in coeffs.iter_mut().zip(self.values.iter()) {
            let denom = lam.max(0.0) + ridge;
            *c = if denom > 0.0 { *c / denom } else { 0.0 };
        }
        &self.vectors * coeffs
    }
}

pub fn factorize_kernel(kss: &DMatrix<f64>, rank: usize) -> Result<LowRankFactor> {
    KernelSpectrum::new(kss)?.factor(rank)
}

/// MMD coefficient matrix: `1/N_S^2` on the source block, `1/N_T^2` on the target
/// block and `-1/(N_S N_T)` across. It equals `c c^T` with
/// `c = [1/N_S, ..., -1/N_T, ...]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmdCoeff {
    pub n_source: usize,
    pub n_target: usize,
}

impl MmdCoeff {
    pub fn new(n_source: usize, n_target: usize) -> Result<Self> {
        if n_source == 0 || n_target == 0 {
            return Err(param(format!(
                "MMD needs both domains, got {n_source} source and {n_target} target samples"
            )));
        }
        Ok(Self { n_source, n_target })
    }

    pub fn dim(&self) -> usize {
        self.n_source + self.n_target
    }

    /// The vector `c` with `S = c c^T`.
    pub fn weights(&self) -> DVector<f64> {
        let (s, t) = (self.n_source as f64, self.n_target as f64);
        DVector::from_fn(self.dim(), |i, _| {
            if i < self.n_source {
                1.0 / s
            } else {
                -1.0 / t
            }
        })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let (s, t) = (self.n_source as f64, self.n_target as f64);
        let ns = self.n_source;
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| match (i < ns, j < ns) {
            (true, true) => 1.0 / (s * s),
            (false, false) => 1.0 / (t * t),
            _ => -1.0 / (s * t),
        })
    }
}

/// Gaussian kernel over stacked source rows followed by target rows.
#[derive(Debug, Clone)]
pub struct JointKernel {
    cfg: KernelConfig,
    points: DMatrix<f64>,
    n_source: usize,
    k: DMatrix<f64>,
}

impl JointKernel {
    pub fn new(source: &DMatrix<f64>, target: &DMatrix<f64>, cfg: KernelConfig) -> Result<Self> {
        if source.nrows() == 0 {
            return Err(data("joint kernel needs at least one source sample"));
        }
        if target.nrows() > 0 && target.ncols() != source.ncols() {
            return Err(data(format!(
                "source has {} features but target has {}",
                source.ncols(),
                target.ncols()
            )));
        }
        ensure_finite(source.as_slice(), "source features")?;
        let mut jk = Self {
            cfg,
            points: source.transpose(),
            n_source: source.nrows(),
            k: kernel_matrix(source, &cfg),
        };
        if target.nrows() > 0 {
            jk.push_target(target)?;
        }
        Ok(jk)
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_target(&self) -> usize {
        self.points.ncols() - self.n_source
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// Stacked samples, one per column.
    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    /// Appends target rows, computing only the new kernel entries.
    pub fn push_target(&mut self, rows: &DMatrix<f64>) -> Result<()> {
        if rows.ncols() != self.feature_dim() {
            return Err(data(format!(
                "target rows have {} features, expected {}",
                rows.ncols(),
                self.feature_dim()
            )));
        }
        ensure_finite(rows.as_slice(), "target features")?;
        let old = self.len();
        let added = rows.nrows();
        let new_pts = rows.transpose();
        let mut points = DMatrix::zeros(self.feature_dim(), old + added);
        points.columns_mut(0, old).copy_from(&self.points);
        points.columns_mut(old, added).copy_from(&new_pts);

        let n = old + added;
        let mut k = DMatrix::identity(n, n);
        k.view_mut((0, 0), (old, old)).copy_from(&self.k);
        for j in old..n {
            for i in 0..j {
                let v = self.cfg.eval_sq(sq_dist(points.column(i), points.column(j)));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        self.points = points;
        self.k = k;
        Ok(())
    }

    /// Kernel column `[k(x_1, x), ..., k(x_N, x)]` of a new point.
    pub fn column(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.feature_dim() {
            return Err(data(format!(
                "point has {} features, expected {}",
                x.len(),
                self.feature_dim()
            )));
        }
        let xv = DVectorView::from_slice(x, x.len());
        Ok(DVector::from_fn(self.len(), |i, _| {
            self.cfg.eval_sq(sq_dist(self.points.column(i), xv))
        }))
    }

    /// Source block `K_SS`.
    pub fn source_block(&self) -> DMatrix<f64> {
        self.k.view((0, 0), (self.n_source, self.n_source)).into_owned()
    }
}

/// Squared empirical MMD, `tr(K S)`.
pub fn mmd_squared(kernel: &JointKernel, coeff: &MmdCoeff) -> Result<f64> {
    if coeff.n_source == 0 || coeff.n_target == 0 {
        return Err(param("MMD needs both source and target samples"));
    }
    if coeff.n_source != kernel.n_source() || coeff.n_target != kernel.n_target() {
        return Err(data(format!(
            "MMD coefficients are for {}+{} samples but the kernel holds {}+{}",
            coeff.n_source,
            coeff.n_target,
            kernel.n_source(),
            kernel.n_target()
        )));
    }
    let c = coeff.weights();
    let k = kernel.matrix();
    // tr(K c c^T) = c^T K c
    let value = c.dot(&(k * &c));
    Ok(value.max(0.0))
}
