//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{data, Result};

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
///
/// Each eigenvector is sign-normalized so that its entry sum is positive (or, when
/// the sum vanishes, its largest-magnitude entry is positive). The normalization
/// makes repeated factorizations of the same matrix reproducible.
pub fn sym_eigen_ascending(mat: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    // faer's tridiagonal divide-and-conquer stays accurate on graph Laplacians
    // where nalgebra's implicit QR loses several digits.
    let a = faer::Mat::<f64>::from_fn(n, n, |i, j| mat[(i, j)]);
    let eig = a.selfadjoint_eigendecomposition(faer::Side::Lower);
    let (s, u) = (eig.s().column_vector(), eig.u());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| s[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = DVector::from_fn(n, |i, _| u[(i, src)]);
        if canonical_sign(col.as_slice()) < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

fn canonical_sign(v: &[f64]) -> f64 {
    let sum: f64 = v.iter().sum();
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if sum.abs() > 1e-8 * scale * (v.len() as f64).sqrt() {
        return sum.signum();
    }
    let mut best = 0.0_f64;
    for &x in v {
        // First entry wins ties so the choice is deterministic.
        if x.abs() > best.abs() * (1.0 + 1e-9) {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Largest absolute asymmetry `|a_ij - a_ji|`.
pub fn asymmetry(mat: &DMatrix<f64>) -> f64 {
    let n = mat.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((mat[(i, j)] - mat[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn ensure_square(mat: &DMatrix<f64>, what: &str) -> Result<()> {
    if mat.nrows() != mat.ncols() {
        return Err(data(format!(
            "{what} must be square, got {}x{}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(data(format!("{what} has a non-finite entry at index {i}"))),
        None => Ok(()),
    }
}

/// Median of a slice (average of the two middle values for even lengths).
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}
