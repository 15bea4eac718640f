//! Block subproblems of the joint optimizer.
//!
//! Classifier block: with `X~ = (Z_S 1, Z_S V)` and `u = (beta0; eta)`,
//! `f(u) = mean psi(X~ u)` plus the ridge `lambda/2 |eta|^2`.
//!
//! Mapping block: with `q = K Z~ alpha~` (the source-weighted kernel columns) the
//! empirical kernel `K W W^T K` enters through `W^T q` and `W^T K`. Every term of
//! `g(W)` and its gradient reduces to a few matrix-vector products.

use nalgebra::{DMatrix, DVector};

use super::loss::{psi, psi_prime};

/// `f(u) = (1/N_S) sum_i psi((X~ u)_i)`.
pub fn loss_f(x_tilde: &DMatrix<f64>, u: &DVector<f64>, delta: f64) -> f64 {
    let margins = x_tilde * u;
    margins.iter().map(|&a| psi(a, delta)).sum::<f64>() / x_tilde.nrows() as f64
}

/// `grad f(u) = (1/N_S) X~^T psi'(X~ u)`.
pub fn grad_f(x_tilde: &DMatrix<f64>, u: &DVector<f64>, delta: f64) -> DVector<f64> {
    let slopes = (x_tilde * u).map(|a| psi_prime(a, delta));
    x_tilde.tr_mul(&slopes) / x_tilde.nrows() as f64
}

/// Minimizer of `<grad f(u_hat), u - u_hat> + L/2 |u - u_hat|^2 + lambda/2 |e u|^2`
/// where `e = diag(0, 1, ..., 1)` leaves the intercept unpenalized.
pub fn u_update(
    x_tilde: &DMatrix<f64>,
    u_hat: &DVector<f64>,
    lipschitz: f64,
    lambda: f64,
    delta: f64,
) -> DVector<f64> {
    let g = grad_f(x_tilde, u_hat, delta);
    DVector::from_fn(u_hat.len(), |j, _| {
        let penalty = if j == 0 { 0.0 } else { lambda };
        (lipschitz * u_hat[j] - g[j]) / (lipschitz + penalty)
    })
}

/// Gradient of the classifier block's local model at `u`; zero at the `u_update` output.
pub fn u_model_gradient(
    x_tilde: &DMatrix<f64>,
    u_hat: &DVector<f64>,
    u: &DVector<f64>,
    lipschitz: f64,
    lambda: f64,
    delta: f64,
) -> DVector<f64> {
    let mut g = grad_f(x_tilde, u_hat, delta) + (u - u_hat) * lipschitz;
    for j in 1..g.len() {
        g[j] += lambda * u[j];
    }
    g
}

/// The smooth part `g(W)` of the mapping subproblem with the classifier held fixed.
#[derive(Debug, Clone)]
pub struct MappingProblem<'a> {
    /// Joint kernel over source then target samples.
    pub k: &'a DMatrix<f64>,
    /// Source labels in `{-1, +1}`.
    pub labels: &'a DVector<f64>,
    /// `q = K[:, S] y` with `y = Z_S alpha`.
    pub q: DVector<f64>,
    pub beta0: f64,
    pub lambda: f64,
    pub lambda1: f64,
    pub delta: f64,
    /// MMD weights `c` (with `S = c c^T`); `None` before any target sample exists.
    pub mmd_weights: Option<DVector<f64>>,
}

impl<'a> MappingProblem<'a> {
    /// `y` holds the expansion weights `Z_S alpha` over the source samples.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: &'a DMatrix<f64>,
        labels: &'a DVector<f64>,
        y: &DVector<f64>,
        beta0: f64,
        lambda: f64,
        lambda1: f64,
        delta: f64,
        n_target: usize,
    ) -> Self {
        let n_source = labels.len();
        let q = k.columns(0, n_source) * y;
        let mmd_weights = (n_target > 0).then(|| {
            crate::kernel::MmdCoeff {
                n_source,
                n_target,
            }
            .weights()
        });
        Self {
            k,
            labels,
            q,
            beta0,
            lambda,
            lambda1,
            delta,
            mmd_weights,
        }
    }

    fn n_source(&self) -> usize {
        self.labels.len()
    }

    /// Source margins `Y_i (q^T W W^T k_i + beta0)`.
    pub fn margins(&self, w: &DMatrix<f64>) -> DVector<f64> {
        let wq = w.tr_mul(&self.q);
        let ns = self.n_source();
        // (W^T K[:, S])^T (W^T q) = K[S, :] W W^T q
        let scores = self.k.columns(0, ns).tr_mul(&(w * wq));
        DVector::from_fn(ns, |i, _| self.labels[i] * (scores[i] + self.beta0))
    }

    pub fn loss_term(&self, w: &DMatrix<f64>) -> f64 {
        let m = self.margins(w);
        m.iter().map(|&a| psi(a, self.delta)).sum::<f64>() / self.n_source() as f64
    }

    pub fn ridge_term(&self, w: &DMatrix<f64>) -> f64 {
        0.5 * self.lambda * w.tr_mul(&self.q).norm_squared()
    }

    /// `lambda1 tr(K W W^T K S) = lambda1 |W^T K c|^2`.
    pub fn mmd_term(&self, w: &DMatrix<f64>) -> f64 {
        match &self.mmd_weights {
            Some(c) => self.lambda1 * w.tr_mul(&(self.k * c)).norm_squared(),
            None => 0.0,
        }
    }

    pub fn value(&self, w: &DMatrix<f64>) -> f64 {
        self.loss_term(w) + self.ridge_term(w) + self.mmd_term(w)
    }

    /// `sum_i c_i (k_i q^T + q k_i^T) W` with `c_i = Y_i psi'(a_i) / N_S`.
    pub fn grad_loss(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let ns = self.n_source();
        let margins = self.margins(w);
        let c = DVector::from_fn(ns, |i, _| {
            self.labels[i] * psi_prime(margins[i], self.delta) / ns as f64
        });
        let p = self.k.columns(0, ns) * c;
        let wq = w.tr_mul(&self.q);
        let wp = w.tr_mul(&p);
        &p * wq.transpose() + &self.q * wp.transpose()
    }

    /// `lambda (K Z~ alpha~)(K Z~ alpha~)^T W`.
    pub fn grad_ridge(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let wq = w.tr_mul(&self.q);
        (&self.q * wq.transpose()) * self.lambda
    }

    /// `2 lambda1 K S K W`.
    pub fn grad_mmd(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.mmd_weights {
            Some(c) => {
                let kc = self.k * c;
                let wkc = w.tr_mul(&kc);
                (kc * wkc.transpose()) * (2.0 * self.lambda1)
            }
            None => DMatrix::zeros(w.nrows(), w.ncols()),
        }
    }

    pub fn gradient(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        self.grad_loss(w) + self.grad_ridge(w) + self.grad_mmd(w)
    }
}

/// `lambda2 |H_t W - H_{t-1} W_{t-1}|_F^2`: only the first `n_source` rows count.
pub fn smoothness(w: &DMatrix<f64>, anchor: &DMatrix<f64>, n_source: usize, lambda2: f64) -> f64 {
    let diff = w.rows(0, n_source) - anchor.rows(0, n_source);
    lambda2 * diff.norm_squared()
}

/// Closed-form proximal step for the mapping block.
///
/// `(L2 I + 2 lambda2 H^T H)` is diagonal: `L2 + 2 lambda2` on source rows and `L2`
/// on target rows, so the inverse is applied row by row.
pub fn w_update(
    problem: &MappingProblem<'_>,
    w_hat: &DMatrix<f64>,
    anchor: &DMatrix<f64>,
    lipschitz: f64,
    lambda2: f64,
) -> DMatrix<f64> {
    let ns = problem.n_source();
    let mut rhs = w_hat * lipschitz - problem.gradient(w_hat);
    for i in 0..w_hat.nrows() {
        let mut row = rhs.row_mut(i);
        if i < ns {
            row += anchor.row(i) * (2.0 * lambda2);
            row /= lipschitz + 2.0 * lambda2;
        } else {
            row /= lipschitz;
        }
    }
    rhs
}

/// Gradient of the mapping block's local model at `w`; zero at the `w_update` output.
pub fn w_model_gradient(
    problem: &MappingProblem<'_>,
    w_hat: &DMatrix<f64>,
    w: &DMatrix<f64>,
    anchor: &DMatrix<f64>,
    lipschitz: f64,
    lambda2: f64,
) -> DMatrix<f64> {
    let ns = problem.n_source();
    let mut g = problem.gradient(w_hat) + (w - w_hat) * lipschitz;
    let pull = (w.rows(0, ns) - anchor.rows(0, ns)) * (2.0 * lambda2);
    let mut top = g.rows_mut(0, ns);
    top += pull;
    g
}
