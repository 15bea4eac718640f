//! Huberized hinge loss: a C1 surrogate of the SVM hinge with smoothing width `delta`.

/// `0` beyond the margin, quadratic on `(1 - delta, 1]`, linear below.
#[inline]
pub fn psi(a: f64, delta: f64) -> f64 {
    if a > 1.0 {
        0.0
    } else if a > 1.0 - delta {
        (1.0 - a).powi(2) / (2.0 * delta)
    } else {
        1.0 - a - delta / 2.0
    }
}

#[inline]
pub fn psi_prime(a: f64, delta: f64) -> f64 {
    if a > 1.0 {
        0.0
    } else if a > 1.0 - delta {
        -(1.0 - a) / delta
    } else {
        -1.0
    }
}
