//! Kronecker products, partial traces and block rearrangement.
//!
//! Block `(i, j)` of an `(n1·n2) × (n1·n2)` matrix is the `n2 × n2`
//! submatrix with top-left corner `(i·n2, j·n2)`.

use super::Matrix;
use crate::{Error, Result};

/// `A ⊗ B`, the block matrix `[a_ij B]`.
pub fn kron_product(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// `F_1 ⊗ … ⊗ F_m` for `m ≥ 1` factors.
pub fn kron_all<M: AsRef<Matrix>>(factors: &[M]) -> Matrix {
    let mut iter = factors.iter();
    let first = iter
        .next()
        .expect("kron_all needs at least one factor")
        .as_ref()
        .clone();
    iter.fold(first, |acc, f| acc.kronecker(f.as_ref()))
}

fn check_blocked(m: &Matrix, n1: usize, n2: usize) -> Result<()> {
    let n = n1 * n2;
    if n1 == 0 || n2 == 0 || m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected a {n}x{n} matrix for blocks {n1}x{n2}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `Tr_1(M)`: the `n1 × n1` matrix of block traces.
pub fn partial_trace_1(m: &Matrix, n1: usize, n2: usize) -> Result<Matrix> {
    check_blocked(m, n1, n2)?;
    Ok(Matrix::from_fn(n1, n1, |i, j| {
        (0..n2).map(|a| m[(i * n2 + a, j * n2 + a)]).sum()
    }))
}

/// `Tr_2(M)`: the `n2 × n2` sum of diagonal blocks.
pub fn partial_trace_2(m: &Matrix, n1: usize, n2: usize) -> Result<Matrix> {
    check_blocked(m, n1, n2)?;
    let mut out = Matrix::zeros(n2, n2);
    for i in 0..n1 {
        out += m.view((i * n2, i * n2), (n2, n2));
    }
    Ok(out)
}

/// Block rearrangement `R` of an `(n1·n2)`-square matrix.
///
/// Row `i·n1 + j` holds `vec(M_(ij))` with column-stacking `vec`, so
/// `rearrange(A ⊗ B) = vec_r(A) vec(B)ᵀ` has rank one.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangedMatrix {
    pub matrix: Matrix,
    pub n1: usize,
    pub n2: usize,
}

impl RearrangedMatrix {
    /// Inverse of the row indexing: an `n1²` vector to the `n1 × n1` matrix
    /// with `U[i, j] = u[i·n1 + j]`.
    pub fn left_to_matrix(&self, u: &[f64]) -> Matrix {
        assert_eq!(u.len(), self.n1 * self.n1);
        Matrix::from_row_slice(self.n1, self.n1, u)
    }

    /// Inverse of the column-stacking `vec`: `V[a, b] = v[b·n2 + a]`.
    pub fn right_to_matrix(&self, v: &[f64]) -> Matrix {
        assert_eq!(v.len(), self.n2 * self.n2);
        Matrix::from_column_slice(self.n2, self.n2, v)
    }
}

pub fn rearrange(m: &Matrix, n1: usize, n2: usize) -> Result<RearrangedMatrix> {
    check_blocked(m, n1, n2)?;
    let mut r = Matrix::zeros(n1 * n1, n2 * n2);
    for i in 0..n1 {
        for j in 0..n1 {
            let row = i * n1 + j;
            for b in 0..n2 {
                for a in 0..n2 {
                    r[(row, b * n2 + a)] = m[(i * n2 + a, j * n2 + b)];
                }
            }
        }
    }
    Ok(RearrangedMatrix { matrix: r, n1, n2 })
}

/// Joint index of a multi-index, row-major over factors.
pub fn index_join(parts: &[usize], dims: &[usize]) -> Result<usize> {
    if parts.len() != dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "multi-index of length {} for {} factors",
            parts.len(),
            dims.len()
        )));
    }
    let mut idx = 0usize;
    for (&p, &d) in parts.iter().zip(dims) {
        if p >= d {
            return Err(Error::IndexOutOfRange { index: p, size: d });
        }
        idx = idx * d + p;
    }
    Ok(idx)
}

/// Inverse of [`index_join`].
pub fn index_split(i: usize, dims: &[usize]) -> Result<Vec<usize>> {
    let total: usize = dims.iter().product();
    if i >= total {
        return Err(Error::IndexOutOfRange {
            index: i,
            size: total,
        });
    }
    let mut parts = vec![0; dims.len()];
    let mut rest = i;
    for (slot, &d) in parts.iter_mut().zip(dims).rev() {
        *slot = rest % d;
        rest /= d;
    }
    Ok(parts)
}
