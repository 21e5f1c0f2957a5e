//! Small dense linear-algebra helpers shared by the bounds and the estimator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

/// Eigenvalue ratio above which a symmetric matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Inverse of a symmetric positive (semi)definite matrix.
#[derive(Clone, Debug)]
pub struct SymInverse {
    pub inverse: DMatrix<f64>,
    /// Condition number of the diagonally equilibrated matrix.
    pub condition: f64,
    /// Eigenvalues of the equilibrated matrix, ascending.
    pub eigenvalues: Vec<f64>,
    /// Number of eigen-directions dropped by the pseudo-inverse.
    pub dropped: usize,
}

/// Information matrices mix parameters whose natural units differ by many
/// orders of magnitude (seconds vs radians), so the matrix is scaled to unit
/// diagonal before the eigendecomposition and scaled back afterwards.
fn equilibrate(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let d = DVector::from_fn(m.nrows(), |i, _| {
        let v = m[(i, i)];
        if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }
    });
    let b = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)] * d[j]);
    (b, d)
}

fn decompose(m: &DMatrix<f64>) -> (SymmetricEigen<f64, nalgebra::Dyn>, DVector<f64>, Vec<f64>, f64) {
    let (b, d) = equilibrate(m);
    let b = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(b);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    let max = ev.last().copied().unwrap_or(0.0);
    let min = ev.first().copied().unwrap_or(0.0);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    (eig, d, ev, condition)
}

fn assemble(eig: &SymmetricEigen<f64, nalgebra::Dyn>, d: &DVector<f64>, cutoff: f64) -> (DMatrix<f64>, usize) {
    let n = d.len();
    let mut inv = DMatrix::zeros(n, n);
    let mut dropped = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= cutoff {
            dropped += 1;
            continue;
        }
        let u = eig.eigenvectors.column(k);
        inv += (u * u.transpose()) / lambda;
    }
    let inv = DMatrix::from_fn(n, n, |i, j| d[i] * inv[(i, j)] * d[j]);
    (inv, dropped)
}

/// Inverse of a symmetric positive definite matrix. Fails with the
/// equilibrated eigen-spectrum when the matrix is numerically singular.
pub fn sym_inverse(m: &DMatrix<f64>) -> Result<SymInverse> {
    let (eig, d, eigenvalues, condition) = decompose(m);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularFim { condition, eigenvalues });
    }
    let (inverse, _) = assemble(&eig, &d, 0.0);
    Ok(SymInverse { inverse, condition, eigenvalues, dropped: 0 })
}

/// Moore-Penrose style inverse that drops eigen-directions below
/// `max_eigenvalue / MAX_CONDITION` (after equilibration).
pub fn sym_pseudo_inverse(m: &DMatrix<f64>) -> SymInverse {
    let (eig, d, eigenvalues, condition) = decompose(m);
    let max = eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let (inverse, dropped) = assemble(&eig, &d, max / MAX_CONDITION);
    SymInverse { inverse, condition, eigenvalues, dropped }
}

/// Solves `A x = b` for Hermitian positive definite `A`. If the Cholesky
/// factorization fails, retries with `A + eps I`, `eps = 1e-10 tr(A) / n`,
/// and reports that regularization was applied.
pub fn hermitian_solve(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Option<(DVector<Complex64>, bool)> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Some((x, false));
        }
    }
    let n = a.nrows();
    let trace: f64 = (0..n).map(|i| a[(i, i)].re).sum();
    let eps = 1e-10 * trace / n as f64;
    if !(eps > 0.0) {
        return None;
    }
    let reg = a + DMatrix::from_diagonal_element(n, n, Complex64::from(eps));
    reg.cholesky().map(|ch| (ch.solve(b), true))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_badly_scaled_spd() {
        let m = DMatrix::from_row_slice(3, 3, &[1e18, 2e8, 0.0, 2e8, 1.0, 0.1, 0.0, 0.1, 3.0]);
        let inv = sym_inverse(&m).unwrap();
        let id = &m * &inv.inverse;
        // Residual in the equilibrated scaling; raw entries cancel at 2e8.
        for i in 0..3 {
            for j in 0..3 {
                let e = id[(i, j)] - if i == j { 1.0 } else { 0.0 };
                assert!((e * (m[(j, j)] / m[(i, i)]).sqrt()).abs() < 1e-12, "({i},{j}) {e}");
            }
        }
    }

    #[test]
    fn singular_reports_spectrum() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match sym_inverse(&m) {
            Err(Error::SingularFim { eigenvalues, .. }) => assert_eq!(eigenvalues.len(), 2),
            other => panic!("expected singular error, got {other:?}"),
        }
        let p = sym_pseudo_inverse(&m);
        assert_eq!(p.dropped, 1);
        assert!((&m * &p.inverse * &m - &m).norm() < 1e-12);
    }

    #[test]
    fn hermitian_solve_regularizes() {
        let one = Complex64::new(1.0, 0.0);
        let a = DMatrix::from_element(2, 2, one);
        let b = DVector::from_element(2, one);
        let (x, reg) = hermitian_solve(&a, &b).unwrap();
        assert!(reg);
        assert!(((&a * &x) - &b).norm() < 1e-6);
    }
}
