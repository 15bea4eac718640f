#![allow(clippy::needless_range_loop)]

//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| gauss(rng))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gauss(rng))
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    // Both classes present.
    let mut y: Vec<i8> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    y[0] = 1;
    y[n - 1] = -1;
    y
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn gauss_k(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-sq_dist(a, b) / gamma).exp()
}

pub fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// Pairwise double-sum MMD^2 evaluated straight from kernel values.
pub fn brute_mmd2(source: &DMatrix<f64>, target: &DMatrix<f64>, gamma: f64) -> f64 {
    let (ns, nt) = (source.nrows(), target.nrows());
    let mut ss = 0.0;
    let mut st = 0.0;
    let mut tt = 0.0;
    for i in 0..ns {
        for j in 0..ns {
            ss += gauss_k(&row(source, i), &row(source, j), gamma);
        }
        for j in 0..nt {
            st += gauss_k(&row(source, i), &row(target, j), gamma);
        }
    }
    for i in 0..nt {
        for j in 0..nt {
            tt += gauss_k(&row(target, i), &row(target, j), gamma);
        }
    }
    ss / (ns * ns) as f64 - 2.0 * st / (ns * nt) as f64 + tt / (nt * nt) as f64
}

pub fn huber(a: f64, delta: f64) -> f64 {
    if a > 1.0 {
        0.0
    } else if a > 1.0 - delta {
        (1.0 - a).powi(2) / (2.0 * delta)
    } else {
        1.0 - a - delta / 2.0
    }
}

pub fn huber_prime(a: f64, delta: f64) -> f64 {
    if a > 1.0 {
        0.0
    } else if a > 1.0 - delta {
        -(1.0 - a) / delta
    } else {
        -1.0
    }
}

fn huber_second(a: f64, delta: f64) -> f64 {
    if a <= 1.0 && a > 1.0 - delta {
        1.0 / delta
    } else {
        0.0
    }
}

/// Every term of the joint objective, written directly from its definition with
/// dense matrices: `K~ = K W W^T K`, `alpha~ = [alpha; 0]`, the block matrix `S`
/// and the row selector `H`.
pub struct ObjectiveTerms {
    pub loss: f64,
    pub ridge: f64,
    pub mmd: f64,
    pub smooth: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.loss + self.ridge + self.mmd + self.smooth
    }
}

#[allow(clippy::too_many_arguments)]
pub fn objective_oracle(
    k: &DMatrix<f64>,
    labels: &[f64],
    alpha: &DVector<f64>,
    beta0: f64,
    w: &DMatrix<f64>,
    w_prev: &DMatrix<f64>,
    lambda: f64,
    lambda1: f64,
    lambda2: f64,
    delta: f64,
) -> ObjectiveTerms {
    let n = k.nrows();
    let ns = labels.len();
    let nt = n - ns;
    let kt = k * w * w.transpose() * k;
    let mut za = DVector::zeros(n);
    for i in 0..ns {
        za[i] = labels[i] * alpha[i];
    }
    let mut loss = 0.0;
    for i in 0..ns {
        let f = (za.transpose() * kt.column(i))[0] + beta0;
        loss += huber(labels[i] * f, delta);
    }
    loss /= ns as f64;
    let ridge = 0.5 * lambda * (za.transpose() * &kt * &za)[0];
    let mmd = if nt == 0 {
        0.0
    } else {
        let s = DMatrix::from_fn(n, n, |i, j| match (i < ns, j < ns) {
            (true, true) => 1.0 / (ns * ns) as f64,
            (false, false) => 1.0 / (nt * nt) as f64,
            _ => -1.0 / (ns * nt) as f64,
        });
        lambda1 * (&kt * s).trace()
    };
    let h = DMatrix::from_fn(ns, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let h_prev = DMatrix::from_fn(ns, w_prev.nrows(), |i, j| if i == j { 1.0 } else { 0.0 });
    let smooth = lambda2 * (h * w - h_prev * w_prev).norm_squared();
    ObjectiveTerms {
        loss,
        ridge,
        mmd,
        smooth,
    }
}

/// Central difference of a scalar function of a matrix, entry by entry.
pub fn fd_matrix<F: Fn(&DMatrix<f64>) -> f64>(f: F, x: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut p = x.clone();
            let mut m = x.clone();
            p[(i, j)] += h;
            m[(i, j)] -= h;
            g[(i, j)] = (f(&p) - f(&m)) / (2.0 * h);
        }
    }
    g
}

pub fn fd_vector<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let g = fd_matrix(|v| f(&v.column(0).into_owned()), &m, h);
    g.column(0).into_owned()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

/// Huberized kernel SVM solved by damped Newton in Cholesky coordinates.
///
/// With `K = R R^T` the decision function is `f = R v + b` and the penalty
/// `c^T K c` becomes `|v|^2`, so the problem is
/// `min mean psi(y_i f_i) + lambda/2 |v|^2` over `(b, v)`.
pub struct NewtonSvm {
    pub gamma: f64,
    pub points: DMatrix<f64>,
    /// `c` in `f(x) = sum_j c_j k(x_j, x) + b`.
    pub c: DVector<f64>,
    pub b: f64,
}

impl NewtonSvm {
    pub fn fit(x: &DMatrix<f64>, labels: &[f64], gamma: f64, lambda: f64, delta: f64) -> Self {
        let n = x.nrows();
        let k = DMatrix::from_fn(n, n, |i, j| gauss_k(&row(x, i), &row(x, j), gamma));
        let chol = k.clone().cholesky().expect("kernel matrix must be positive definite");
        let r = chol.l();
        // Design matrix A = [1, R]; parameters theta = (b, v).
        let a = DMatrix::from_fn(n, n + 1, |i, j| if j == 0 { 1.0 } else { r[(i, j - 1)] });
        let obj = |theta: &DVector<f64>| {
            let f = &a * theta;
            let loss: f64 = (0..n).map(|i| huber(labels[i] * f[i], delta)).sum::<f64>() / n as f64;
            loss + 0.5 * lambda * theta.rows(1, n).norm_squared()
        };
        let mut theta = DVector::zeros(n + 1);
        for _ in 0..500 {
            let f = &a * &theta;
            let mut grad = DVector::zeros(n + 1);
            let mut hess = DMatrix::zeros(n + 1, n + 1);
            for i in 0..n {
                let m = labels[i] * f[i];
                let ai = a.row(i).transpose();
                grad += &ai * (labels[i] * huber_prime(m, delta) / n as f64);
                hess += &ai * ai.transpose() * (huber_second(m, delta) / n as f64);
            }
            for j in 1..=n {
                grad[j] += lambda * theta[j];
                hess[(j, j)] += lambda;
            }
            // The intercept can have zero curvature when no margin sits in the quadratic piece.
            hess[(0, 0)] += 1e-12;
            if grad.norm() < 1e-14 {
                break;
            }
            let step = hess.lu().solve(&grad).expect("Newton system is nonsingular");
            let f0 = obj(&theta);
            let slope = grad.dot(&step);
            let mut t = 1.0;
            let mut next = &theta - &step * t;
            while obj(&next) > f0 - 1e-4 * t * slope && t > 1e-12 {
                t *= 0.5;
                next = &theta - &step * t;
            }
            theta = next;
        }
        // c = R^{-T} v.
        let v = theta.rows(1, n).into_owned();
        let c = r.transpose().solve_upper_triangular(&v).expect("triangular solve");
        Self {
            gamma,
            points: x.clone(),
            c,
            b: theta[0],
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        (0..self.points.nrows())
            .map(|j| self.c[j] * gauss_k(&row(&self.points, j), x, self.gamma))
            .sum::<f64>()
            + self.b
    }
}

/// Two separated Gaussian blobs in 2-D, labels +1 then -1.
pub fn blobs(rng: &mut ChaCha8Rng, per_class: usize, gap: f64) -> (DMatrix<f64>, Vec<i8>) {
    let n = 2 * per_class;
    let mut x = DMatrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let s = if i < per_class { 1.0 } else { -1.0 };
        x[(i, 0)] = s * gap + 0.3 * gauss(rng);
        x[(i, 1)] = 0.3 * gauss(rng);
        y.push(if s > 0.0 { 1 } else { -1 });
    }
    (x, y)
}
