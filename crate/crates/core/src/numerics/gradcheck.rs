//! Central finite-difference gradient checking.

use super::Matrix;

/// Central differences of `f` around `at`, one entry at a time.
pub fn numeric_grad(at: &Matrix, step: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for i in 0..at.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Largest relative error between two gradients, with an absolute floor of
/// `1e-8` in the denominator so entries that are both ~0 compare as equal.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Entry passes if its relative error is below `tol`, or its absolute error
/// is below `tol·1e-3` (finite differences cannot resolve tiny entries to a
/// relative tolerance).
pub fn gradients_agree(analytic: &Matrix, numeric: &Matrix, tol: f64) -> bool {
    analytic.shape() == numeric.shape()
        && analytic.data().iter().zip(numeric.data()).all(|(a, n)| {
            let abs = (a - n).abs();
            abs <= tol * 1e-3 || abs / a.abs().max(n.abs()) < tol
        })
}

#[track_caller]
pub fn assert_grad_close(analytic: &Matrix, numeric: &Matrix, tol: f64) {
    assert!(
        gradients_agree(analytic, numeric, tol),
        "gradient mismatch (max rel err {:.3e})\nanalytic {analytic:?}\nnumeric  {numeric:?}",
        max_relative_error(analytic, numeric)
    );
}
