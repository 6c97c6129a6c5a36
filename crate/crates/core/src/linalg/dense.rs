//! Blocked Cholesky, triangular inverse and SPD inverse.
//!
//! nalgebra's factorizations are unblocked and become memory bound beyond a
//! few hundred rows. These recursive versions push the bulk of the work into
//! matrix products, which matters for the dense baseline at `N` in the
//! thousands.

use nalgebra::Cholesky;

use super::Matrix;

/// Below this size the recursion hands over to nalgebra.
const BLOCK: usize = 128;

/// Lower Cholesky factor `C` with `M = C Cᵀ`, or `None` when `M` is not
/// (numerically) positive definite. Only the lower triangle of `m` is read.
pub fn cholesky_lower(m: &Matrix) -> Option<Matrix> {
    let n = m.nrows();
    debug_assert!(m.is_square());
    if n <= BLOCK {
        return Cholesky::new(m.clone()).map(|c| c.unpack());
    }
    let h = n / 2;
    let r = n - h;
    let l11 = cholesky_lower(&m.view((0, 0), (h, h)).into_owned())?;
    let l11_inv = lower_triangular_inverse(&l11);
    let l21 = m.view((h, 0), (r, h)) * l11_inv.transpose();
    let schur = m.view((h, h), (r, r)) - &l21 * l21.transpose();
    let l22 = cholesky_lower(&schur)?;

    let mut out = Matrix::zeros(n, n);
    out.view_mut((0, 0), (h, h)).copy_from(&l11);
    out.view_mut((h, 0), (r, h)).copy_from(&l21);
    out.view_mut((h, h), (r, r)).copy_from(&l22);
    Some(out)
}

/// Inverse of a non-singular lower-triangular matrix.
pub fn lower_triangular_inverse(l: &Matrix) -> Matrix {
    let n = l.nrows();
    if n <= BLOCK {
        let mut inv = Matrix::identity(n, n);
        // Forward substitution; singular diagonals yield inf/nan, which the
        // callers never produce from a successful factorization.
        l.solve_lower_triangular_mut(&mut inv);
        return inv;
    }
    let h = n / 2;
    let r = n - h;
    let a_inv = lower_triangular_inverse(&l.view((0, 0), (h, h)).into_owned());
    let d_inv = lower_triangular_inverse(&l.view((h, h), (r, r)).into_owned());
    let c = l.view((h, 0), (r, h));
    let x = -(&d_inv * c) * &a_inv;

    let mut out = Matrix::zeros(n, n);
    out.view_mut((0, 0), (h, h)).copy_from(&a_inv);
    out.view_mut((h, 0), (r, h)).copy_from(&x);
    out.view_mut((h, h), (r, r)).copy_from(&d_inv);
    out
}

/// Inverse of a symmetric positive-definite matrix, exactly symmetric.
pub fn spd_inverse(m: &Matrix) -> Option<Matrix> {
    let c = cholesky_lower(m)?;
    let c_inv = lower_triangular_inverse(&c);
    let inv = c_inv.transpose() * &c_inv;
    Some(super::symmetrize(&inv))
}

/// `log det M` from its lower Cholesky factor.
pub fn log_det_from_cholesky(c: &Matrix) -> f64 {
    2.0 * c.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_spd(n: usize) -> Matrix {
        let x = Matrix::from_fn(n, n, |i, j| (((i * 31 + j * 17) % 23) as f64) / 23.0 - 0.4);
        let mut a = x.transpose() * &x;
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        a
    }

    #[test]
    fn blocked_cholesky_reconstructs() {
        for n in [1, 5, 130, 300] {
            let a = test_spd(n);
            let c = cholesky_lower(&a).unwrap();
            let err = (&c * c.transpose() - &a).norm() / a.norm();
            assert!(err < 1e-13, "n={n} err={err}");
            for j in 0..n {
                for i in 0..j {
                    assert_eq!(c[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn blocked_inverse_is_inverse() {
        for n in [3, 129, 257] {
            let a = test_spd(n);
            let inv = spd_inverse(&a).unwrap();
            let err = (&a * &inv - Matrix::identity(n, n)).norm();
            assert!(err < 1e-9, "n={n} err={err}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = test_spd(200);
        a[(150, 150)] = -5.0;
        assert!(cholesky_lower(&a).is_none());
    }

    #[test]
    fn log_det_matches_product_of_diagonal() {
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0, 7.0]));
        let c = cholesky_lower(&a).unwrap();
        assert!((log_det_from_cholesky(&c) - 42f64.ln()).abs() < 1e-14);
    }
}
