//! Graph construction over an irregular pixel grid and the graph Fourier transform.
//!
//! The graph is built once per subject from a time-averaged signal: vertex pairs
//! with similar average temperature are strongly connected. The Laplacian
//! eigenbasis then defines the spectral (GFT) coordinates used as features.

mod cache;

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{data, param, Error, Result};
use crate::linalg::{asymmetry, ensure_finite, ensure_square, median, sym_eigen_ascending};

pub use cache::{read_graph_cache, write_graph_cache, GRAPH_CACHE_MAGIC, GRAPH_CACHE_VERSION};

/// Largest grid accepted by the dense eigensolver.
pub const MAX_DENSE_VERTICES: usize = 10_000;

/// Number of vertex pairs sampled by [`default_sigma`].
pub const SIGMA_SAMPLE_PAIRS: usize = 10_000;

/// Retained pixels of a masked, compressed frame. Vertex `i` sits at `coords[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrregularGrid {
    coords: Vec<(i64, i64)>,
}

impl IrregularGrid {
    pub fn new(coords: Vec<(i64, i64)>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(data(format!(
                "a grid needs at least 2 vertices, got {}",
                coords.len()
            )));
        }
        let mut seen = HashSet::with_capacity(coords.len());
        for c in &coords {
            if !seen.insert(*c) {
                return Err(data(format!("duplicate vertex coordinate {c:?}")));
            }
        }
        Ok(Self { coords })
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len()
    }

    /// Pixel `(row, col)` of each vertex. Coordinates never enter the edge weights.
    pub fn coords(&self) -> &[(i64, i64)] {
        &self.coords
    }
}

/// Values of a signal on the grid vertices at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignal {
    pub values: DVector<f64>,
    pub time_index: usize,
}

impl GraphSignal {
    pub fn new(values: DVector<f64>, time_index: usize) -> Result<Self> {
        ensure_finite(values.as_slice(), "graph signal")?;
        Ok(Self { values, time_index })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    pub weights: DMatrix<f64>,
    pub sigma: f64,
}

/// Orthonormal Laplacian eigenvectors (columns) with ascending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    pub eigenvectors: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl EigenBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Leading `D` GFT coefficients of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures {
    pub coeffs: DVector<f64>,
}

impl SpectralFeatures {
    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }
}

/// Mean of the first `window` signals, vertex by vertex.
pub fn averaged_signal(signals: &[GraphSignal], window: usize) -> Result<DVector<f64>> {
    if window == 0 {
        return Err(param("averaging window must be at least 1 frame"));
    }
    let used = &signals[..window.min(signals.len())];
    let first = used
        .first()
        .ok_or_else(|| data("cannot average an empty signal sequence"))?;
    let mut acc = DVector::zeros(first.len());
    for s in used {
        if s.len() != first.len() {
            return Err(data("signals have inconsistent vertex counts"));
        }
        acc += &s.values;
    }
    Ok(acc / used.len() as f64)
}

/// Median of squared pairwise differences of the averaged signal.
///
/// Uses every pair when there are at most [`SIGMA_SAMPLE_PAIRS`] of them, otherwise a
/// fixed-seed sample of that many pairs. Falls back to 1.0 for a constant signal.
pub fn default_sigma(averaged: &[f64]) -> Result<f64> {
    let m = averaged.len();
    if m < 2 {
        return Err(data("need at least 2 vertices to choose sigma"));
    }
    ensure_finite(averaged, "averaged signal")?;
    let total_pairs = m * (m - 1) / 2;
    let mut sq = Vec::with_capacity(total_pairs.min(SIGMA_SAMPLE_PAIRS));
    if total_pairs <= SIGMA_SAMPLE_PAIRS {
        for i in 0..m {
            for j in (i + 1)..m {
                sq.push((averaged[i] - averaged[j]).powi(2));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5161_6d61);
        for _ in 0..SIGMA_SAMPLE_PAIRS {
            let pair = index::sample(&mut rng, m, 2);
            sq.push((averaged[pair.index(0)] - averaged[pair.index(1)]).powi(2));
        }
    }
    let med = median(&mut sq).unwrap_or(0.0);
    Ok(if med > 0.0 { med } else { 1.0 })
}

/// `A_ij = exp(-|s_i - s_j|^2 / sigma)` off the diagonal, zero on it.
pub fn build_adjacency(averaged: &[f64], sigma: f64) -> Result<AdjacencyMatrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(param(format!("sigma must be positive and finite, got {sigma}")));
    }
    let m = averaged.len();
    if m < 2 {
        return Err(data(format!("need at least 2 vertices, got {m}")));
    }
    ensure_finite(averaged, "averaged signal")?;
    let mut weights = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in (j + 1)..m {
            let w = (-(averaged[i] - averaged[j]).powi(2) / sigma).exp();
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    Ok(AdjacencyMatrix { weights, sigma })
}

/// Combinatorial Laplacian `L = D - A`.
pub fn laplacian(adj: &AdjacencyMatrix) -> Result<DMatrix<f64>> {
    let a = &adj.weights;
    ensure_square(a, "adjacency")?;
    ensure_finite(a.as_slice(), "adjacency")?;
    let m = a.nrows();
    let mut lap = -a.clone();
    for i in 0..m {
        // Row sums exclude the diagonal so the result is exact for any stored diagonal.
        let degree: f64 = (0..m).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        lap[(i, i)] = degree;
    }
    Ok(lap)
}

pub fn eigendecompose(lap: &DMatrix<f64>) -> Result<EigenBasis> {
    ensure_square(lap, "laplacian")?;
    ensure_finite(lap.as_slice(), "laplacian")?;
    let m = lap.nrows();
    if m > MAX_DENSE_VERTICES {
        return Err(param(format!(
            "grid has {m} vertices; dense eigendecomposition is limited to {MAX_DENSE_VERTICES}"
        )));
    }
    let scale = lap.amax().max(1.0);
    let skew = asymmetry(lap);
    if skew > 1e-10 * scale {
        return Err(data(format!("laplacian is not symmetric (max |L - L^T| = {skew:e})")));
    }
    let (eigenvalues, eigenvectors) = sym_eigen_ascending(lap);
    Ok(EigenBasis {
        eigenvectors,
        eigenvalues,
    })
}

fn check_dims(basis: &EigenBasis, len: usize) -> Result<()> {
    if basis.dim() != len {
        return Err(data(format!(
            "signal has {len} vertices but the basis has {}",
            basis.dim()
        )));
    }
    Ok(())
}

/// Forward transform `F^T s`.
pub fn gft(basis: &EigenBasis, signal: &GraphSignal) -> Result<DVector<f64>> {
    check_dims(basis, signal.len())?;
    Ok(basis.eigenvectors.tr_mul(&signal.values))
}

/// Inverse transform `F s_hat`.
pub fn inverse_gft(basis: &EigenBasis, spectrum: &DVector<f64>) -> Result<DVector<f64>> {
    check_dims(basis, spectrum.len())?;
    Ok(&basis.eigenvectors * spectrum)
}

pub fn truncate_features(spectrum: &DVector<f64>, dim: usize) -> Result<SpectralFeatures> {
    if dim == 0 || dim > spectrum.len() {
        return Err(param(format!(
            "feature dimension must be in 1..={}, got {dim}",
            spectrum.len()
        )));
    }
    Ok(SpectralFeatures {
        coeffs: spectrum.rows(0, dim).into_owned(),
    })
}

/// Relative l2 error of reconstructing `signal` from its first `dim` GFT coefficients.
pub fn reconstruct_error(basis: &EigenBasis, signal: &GraphSignal, dim: usize) -> Result<f64> {
    let norm = signal.values.norm();
    if norm == 0.0 {
        return Err(Error::UndefinedRatio(
            "reconstruction error of a zero signal".into(),
        ));
    }
    let spectrum = gft(basis, signal)?;
    let kept = truncate_features(&spectrum, dim)?;
    let partial = basis.eigenvectors.columns(0, dim) * kept.coeffs;
    Ok((partial - &signal.values).norm() / norm)
}

/// A grid together with its graph and eigenbasis, as persisted in the graph cache.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphModel {
    pub grid: IrregularGrid,
    pub sigma: f64,
    pub basis: EigenBasis,
}

impl GraphModel {
    /// Builds the graph from the mean of the first `window` signals.
    pub fn from_signals(
        grid: IrregularGrid,
        signals: &[GraphSignal],
        window: usize,
        sigma: Option<f64>,
    ) -> Result<Self> {
        let avg = averaged_signal(signals, window)?;
        if avg.len() != grid.vertex_count() {
            return Err(data(format!(
                "signals have {} vertices but the grid has {}",
                avg.len(),
                grid.vertex_count()
            )));
        }
        let sigma = match sigma {
            Some(s) => s,
            None => default_sigma(avg.as_slice())?,
        };
        let adj = build_adjacency(avg.as_slice(), sigma)?;
        let basis = eigendecompose(&laplacian(&adj)?)?;
        Ok(Self { grid, sigma, basis })
    }

    /// Low-frequency features of every signal, one row per time step.
    pub fn features(&self, signals: &[GraphSignal], dim: usize) -> Result<DMatrix<f64>> {
        let m = self.basis.dim();
        if dim == 0 || dim > m {
            return Err(param(format!("feature dimension must be in 1..={m}, got {dim}")));
        }
        let lead = self.basis.eigenvectors.columns(0, dim);
        let mut out = DMatrix::zeros(signals.len(), dim);
        for (t, s) in signals.iter().enumerate() {
            check_dims(&self.basis, s.len())?;
            let coeffs = lead.tr_mul(&s.values);
            out.set_row(t, &coeffs.transpose());
        }
        Ok(out)
    }
}
