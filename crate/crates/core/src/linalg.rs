//! Small dense helpers shared by the estimation modules.
//!
//! All matrices here are tiny (the hidden dimension of the case study is 2),
//! so the helpers favour clarity over blocking or in-place tricks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{CgnsError, Result};

/// Absolute eigenvalue tolerance for "positive semidefinite" checks.
pub const TOL_PSD: f64 = 1e-10;

/// Smallest eigenvalue a filter covariance may have before it is treated as
/// singular by the backward recursions.
pub const TOL_PD_STRICT: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Largest and smallest real part over the (possibly complex) spectrum of a
/// general square matrix.
pub fn real_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    match m.nrows() {
        0 => (0.0, 0.0),
        1 => (m[(0, 0)], m[(0, 0)]),
        2 => {
            let half_tr = 0.5 * (m[(0, 0)] + m[(1, 1)]);
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = half_tr * half_tr - det;
            if disc >= 0.0 {
                let s = disc.sqrt();
                (half_tr + s, half_tr - s)
            } else {
                (half_tr, half_tr)
            }
        }
        _ => m
            .complex_eigenvalues()
            .iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), z| {
                (hi.max(z.re), lo.min(z.re))
            }),
    }
}

/// Symmetrizes `m` and removes negative eigenvalues.
///
/// Fails with [`CgnsError::NotPsd`] when the smallest eigenvalue is below
/// `-TOL_PSD`. Matrices that are already PSD come back as their symmetric part,
/// untouched by an eigendecomposition round trip.
pub fn clamp_psd(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let (clamped, min_eig) = project_psd(m);
    if min_eig < -TOL_PSD {
        return Err(CgnsError::NotPsd { what, min_eig });
    }
    Ok(clamped)
}

/// Nearest PSD matrix (in the eigenvalue-clamping sense) together with the
/// smallest eigenvalue of the symmetric input.
pub fn project_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = symmetrize(m);
    if sym.nrows() == 0 {
        return (sym, 0.0);
    }
    let eig = SymmetricEigen::new(sym.clone());
    let min_eig = eig.eigenvalues.min();
    if min_eig >= 0.0 {
        return (sym, min_eig);
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    (symmetrize(&(v * DMatrix::from_diagonal(&vals) * v.transpose())), min_eig)
}

/// Symmetric square root through the eigendecomposition, with eigenvalues in
/// `[-TOL_PSD, 0)` clamped to zero before rooting.
pub fn psd_sqrt(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(CgnsError::Dimension(format!("{what} must be square")));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let min_eig = eig.eigenvalues.min();
    if min_eig < -TOL_PSD {
        return Err(CgnsError::NotPsd { what, min_eig });
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&roots) * v.transpose())))
}

/// Cholesky factor of a symmetric positive definite matrix.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Option<Self> {
        let chol = Cholesky::new(symmetrize(m))?;
        // nalgebra accepts tiny positive pivots; reject those that would make
        // the solves meaningless.
        let l = chol.l_dirty();
        if (0..l.nrows()).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
            return None;
        }
        Some(SpdFactor { chol })
    }

    /// `M⁻¹ b`
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `a M⁻¹` for a left operand `a`, using the symmetry of `M`.
    pub fn right_solve(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(&a.transpose()).transpose()
    }
}

/// Row `j` of a time-major path matrix as a column vector.
pub(crate) fn row(m: &DMatrix<f64>, j: usize) -> DVector<f64> {
    m.row(j).transpose()
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_rejects_clearly_negative() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-6]);
        assert!(matches!(clamp_psd(&m, "m"), Err(CgnsError::NotPsd { .. })));
    }

    #[test]
    fn clamp_zeroes_roundoff_negatives() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-13]);
        let c = clamp_psd(&m, "m").unwrap();
        assert!(sym_eig_range(&c).0 >= 0.0);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn real_parts_of_rotation_block() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -0.5]);
        let (hi, lo) = real_eig_range(&m);
        assert!((hi - -0.75).abs() < 1e-14 && (lo - -0.75).abs() < 1e-14);
        let g = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.5]);
        let (hi, lo) = real_eig_range(&g);
        assert!((hi - 2.0).abs() < 1e-12 && (lo + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spd_factor_solves() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = SpdFactor::new(&m).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let x = f.right_solve(&a);
        assert!((&x * &m - a).norm() < 1e-14);
        assert!(SpdFactor::new(&DMatrix::from_row_slice(1, 1, &[0.0])).is_none());
    }
}
