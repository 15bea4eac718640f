//! Huberized Gaussian-kernel SVM used by the benchmark methods.
//!
//! The kernel expansion is parameterized through a Nystrom factor of the training
//! kernel, `K ~ V V^T`, giving the same `u = (beta0; eta)` problem as the classifier
//! block of the joint optimizer. It is solved to convergence with FISTA.

use nalgebra::{DMatrix, DVector};

use crate::error::{data, param, Result};
use crate::kernel::{cross_kernel, kernel_matrix, KernelConfig, KernelSpectrum};
use crate::linalg::ensure_finite;
use crate::onda::{loss_f, u_update, Label};

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub lambda: f64,
    pub delta: f64,
    /// Rank of the Nystrom factor; capped at the training-set size.
    pub rank: usize,
    pub max_iter: usize,
    /// Stop once the relative change of `u` drops below this.
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            delta: 1.0,
            rank: 50,
            max_iter: 2000,
            tol: 1e-9,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !(self.delta > 0.0) {
            return Err(param("SVM lambda and delta must be positive"));
        }
        if self.rank == 0 || self.max_iter == 0 {
            return Err(param("SVM rank and max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HuberSvm {
    cfg: KernelConfig,
    train: DMatrix<f64>,
    /// Maps a kernel column to Nystrom coordinates: `P = F_r diag(lambda_r)^(-1/2)`.
    projection: DMatrix<f64>,
    u: DVector<f64>,
    iterations: usize,
}

impl HuberSvm {
    /// Trains on the rows of `x` with the median-heuristic bandwidth.
    pub fn fit(x: &DMatrix<f64>, labels: &[Label], params: &SvmParams) -> Result<Self> {
        let cfg = KernelConfig::median_heuristic(x)?;
        Self::fit_with_kernel(x, labels, params, cfg, None)
    }

    /// Trains with an explicit bandwidth, optionally warm-started from `init`
    /// (ignored if its length does not match).
    pub fn fit_with_kernel(
        x: &DMatrix<f64>,
        labels: &[Label],
        params: &SvmParams,
        cfg: KernelConfig,
        init: Option<&DVector<f64>>,
    ) -> Result<Self> {
        params.validate()?;
        let n = x.nrows();
        if n < 2 || labels.len() != n {
            return Err(data(format!(
                "SVM needs at least 2 samples with one label each (got {n} rows, {} labels)",
                labels.len()
            )));
        }
        ensure_finite(x.as_slice(), "SVM training features")?;
        let k = kernel_matrix(x, &cfg);
        let spectrum = KernelSpectrum::new(&k)?;
        let top = spectrum.eigenvalues()[0];
        let rank = params
            .rank
            .min(n)
            .min(spectrum.eigenvalues().iter().filter(|&&v| v > 1e-10 * top).count())
            .max(1);
        let factor = spectrum.factor(rank)?;
        let mut projection = spectrum.eigenvectors().columns(0, rank).into_owned();
        for (j, mut col) in projection.column_iter_mut().enumerate() {
            col /= spectrum.eigenvalues()[j].sqrt();
        }
        let y = DVector::from_iterator(n, labels.iter().map(|&v| f64::from(v)));
        let x_tilde = DMatrix::from_fn(n, rank + 1, |i, j| {
            if j == 0 {
                y[i]
            } else {
                y[i] * factor.v[(i, j - 1)]
            }
        });
        // ||X~||_2^2 <= trace(X~^T X~) = N + sum V^2.
        let lipschitz = (n as f64 + factor.v.norm_squared()) / (n as f64 * params.delta);

        let mut u = match init {
            Some(u0) if u0.len() == rank + 1 => u0.clone(),
            _ => DVector::zeros(rank + 1),
        };
        let mut prev = u.clone();
        let mut t = 1.0_f64;
        let mut iterations = 0;
        for k in 1..=params.max_iter {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let v = &u + (&u - &prev) * ((t - 1.0) / t_next);
            let next = u_update(&x_tilde, &v, lipschitz, params.lambda, params.delta);
            // Restart the momentum when the objective goes up.
            let obj = |w: &DVector<f64>| {
                loss_f(&x_tilde, w, params.delta)
                    + 0.5 * params.lambda * w.rows(1, rank).norm_squared()
            };
            let t_used = if obj(&next) > obj(&u) { 1.0 } else { t_next };
            let change = (&next - &u).norm();
            prev = std::mem::replace(&mut u, next);
            t = t_used;
            iterations = k;
            if change <= params.tol * u.norm().max(1.0) {
                break;
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Diverged {
                iteration: iterations,
                reason: "SVM coefficients became non-finite".into(),
            });
        }
        Ok(Self {
            cfg,
            train: x.clone(),
            projection,
            u,
            iterations,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Kernel-expansion weights `w` with `f(x) = sum_i w_i k(x_i, x) + beta0`.
    pub fn expansion_weights(&self) -> DVector<f64> {
        &self.projection * self.u.rows(1, self.u.len() - 1)
    }

    pub fn intercept(&self) -> f64 {
        self.u[0]
    }

    pub fn decision_values(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let kx = cross_kernel(&self.train, x, &self.cfg)?;
        let w = self.expansion_weights();
        Ok(kx.tr_mul(&w).add_scalar(self.intercept()))
    }

    /// Labels with ties going to `+1`, the same rule as the joint model.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<Label>> {
        Ok(self
            .decision_values(x)?
            .iter()
            .map(|&v| if v >= 0.0 { 1 } else { -1 })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (DMatrix<f64>, Vec<Label>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let off = (i as f64) * 0.05;
            rows.extend_from_slice(&[1.0 + off, 1.0 - off]);
            labels.push(1);
            rows.extend_from_slice(&[-1.0 - off, -1.0 + off]);
            labels.push(-1);
        }
        (DMatrix::from_row_slice(20, 2, &rows), labels)
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let (x, y) = blobs();
        let svm = HuberSvm::fit(&x, &y, &SvmParams::default()).unwrap();
        assert_eq!(svm.predict(&x).unwrap(), y);
    }

    #[test]
    fn training_kernel_columns_reproduce_factor_coordinates() {
        let (x, y) = blobs();
        let svm = HuberSvm::fit(&x, &y, &SvmParams::default()).unwrap();
        let d = svm.decision_values(&x).unwrap();
        assert!(d.iter().all(|v| v.is_finite()));
        assert!(svm.iterations() >= 1);
    }

    #[test]
    fn mismatched_labels_are_rejected() {
        let (x, _) = blobs();
        assert!(HuberSvm::fit(&x, &[1, -1], &SvmParams::default()).is_err());
    }
}
