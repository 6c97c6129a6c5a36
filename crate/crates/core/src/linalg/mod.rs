//! Dense symmetric linear algebra specialised to Kronecker structure.

mod dense;
mod eig;
mod kron;
mod power;

pub use dense::{cholesky_lower, log_det_from_cholesky, lower_triangular_inverse, spd_inverse};
pub use eig::{kron_eig, sym_eig, EigenSystem, KronEigenSystem};
pub use kron::{
    index_join, index_split, kron_all, kron_product, partial_trace_1, partial_trace_2, rearrange,
    RearrangedMatrix,
};
pub use power::{
    leading_singular_pair, SingularTriple, DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL,
};

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry accepted when validating untrusted symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric positive-definite matrix.
///
/// The stored matrix is exactly symmetric: constructors replace the input
/// by `(M + Mᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Matrix);

impl SpdMatrix {
    /// Validates squareness, finiteness, symmetry (relative `1e-12`) and
    /// positive definiteness.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let asym = max_asymmetry(&m);
        let scale = m.amax().max(f64::MIN_POSITIVE);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym / scale));
        }
        let m = symmetrize(&m);
        if cholesky_lower(&m).is_none() {
            let min_eigenvalue = sym_eig(&m)
                .map(|e| e.values[0])
                .unwrap_or(f64::NAN);
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(SpdMatrix(m))
    }

    /// Wraps a matrix the caller already knows to be symmetric positive
    /// definite. Symmetrizes but performs no checks.
    pub fn new_unchecked(m: Matrix) -> Self {
        SpdMatrix(symmetrize(&m))
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix(Matrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        SpdMatrix::new(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl Deref for SpdMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl AsRef<Matrix> for SpdMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let mut out = m.clone();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

pub(crate) fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `‖A − B‖_F / ‖B‖_F`, or the absolute difference when `B = 0`.
pub fn relative_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_rejects_asymmetric_input() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn spd_rejects_indefinite_input_with_min_eigenvalue() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        match SpdMatrix::new(m) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert!((min_eigenvalue + 0.1).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spd_rejects_non_finite_and_non_square() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert_eq!(SpdMatrix::new(m), Err(Error::NonFinite));
        assert!(matches!(
            SpdMatrix::new(Matrix::zeros(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn spd_symmetrizes_round_off() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0 + 1e-15, 2.0]);
        let s = SpdMatrix::new(m).unwrap();
        assert_eq!(s[(0, 1)], s[(1, 0)]);
    }
}
