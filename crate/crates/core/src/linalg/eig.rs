use super::{max_asymmetry, symmetrize, Matrix, SpdMatrix};
use crate::{Error, Result};

/// Relative asymmetry tolerated by [`sym_eig`] before symmetrizing.
const EIG_SYMMETRY_TOL: f64 = 1e-8;
const EIG_MAX_SWEEPS: usize = 10_000;

/// Orthonormal eigendecomposition of a symmetric matrix, eigenvalues
/// ascending with `vectors` columns aligned to `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `P diag(λ) Pᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.vectors.clone();
        for (mut col, &l) in scaled.column_iter_mut().zip(&self.values) {
            col *= l;
        }
        scaled * self.vectors.transpose()
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }
}

/// Symmetric eigendecomposition. The input is symmetrized as `(M + Mᵀ)/2`
/// after checking it is symmetric to `1e-8` relative.
pub fn sym_eig(m: &Matrix) -> Result<EigenSystem> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = max_asymmetry(m);
    if asym > EIG_SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym / scale));
    }
    let n = m.nrows();
    let eig = symmetrize(m)
        .try_symmetric_eigen(f64::EPSILON, EIG_MAX_SWEEPS)
        .ok_or(Error::NoConvergence {
            what: "symmetric eigensolver",
            iterations: EIG_MAX_SWEEPS,
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenSystem { values, vectors })
}

/// Factored eigendecomposition of `F_1 ⊗ … ⊗ F_m`.
///
/// The joint eigenvalue at eigen multi-index `(k_1, …, k_m)` is the product
/// of factor eigenvalues, and its eigenvector is the Kronecker product of
/// factor eigenvectors. Joint eigen-indices use the same row-major
/// convention as item indices. Nothing of size `N × N` is ever formed.
#[derive(Debug, Clone, PartialEq)]
pub struct KronEigenSystem {
    pub factors: Vec<EigenSystem>,
    pub dims: Vec<usize>,
}

pub fn kron_eig(factors: &[SpdMatrix]) -> Result<KronEigenSystem> {
    if factors.is_empty() {
        return Err(Error::InvalidArgument(
            "a Kronecker kernel needs at least one factor".into(),
        ));
    }
    let factors = factors
        .iter()
        .map(|f| sym_eig(f))
        .collect::<Result<Vec<_>>>()?;
    let dims = factors.iter().map(EigenSystem::dim).collect();
    Ok(KronEigenSystem { factors, dims })
}

impl KronEigenSystem {
    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    /// Joint eigenvalues indexed by joint eigen-index.
    pub fn joint_values(&self) -> Vec<f64> {
        let mut acc = vec![1.0];
        for f in &self.factors {
            acc = acc
                .iter()
                .flat_map(|&a| f.values.iter().map(move |&l| a * l))
                .collect();
        }
        acc
    }

    /// Eigenvalues sorted ascending together with their joint eigen-index.
    /// Ties keep joint-index order.
    pub fn sorted_spectrum(&self) -> Vec<(f64, usize)> {
        let mut spectrum: Vec<(f64, usize)> = self
            .joint_values()
            .into_iter()
            .enumerate()
            .map(|(k, v)| (v, k))
            .collect();
        spectrum.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        spectrum
    }

    /// Writes the joint eigenvector with joint eigen-index `joint` into
    /// `out` (length `N`), in `O(N)`.
    pub fn fill_eigenvector(&self, joint: usize, out: &mut [f64]) {
        let n = self.size();
        assert_eq!(out.len(), n);
        assert!(joint < n, "eigen-index {joint} out of range");

        let mut ks = vec![0usize; self.dims.len()];
        let mut rest = joint;
        for (slot, &d) in ks.iter_mut().zip(&self.dims).rev() {
            *slot = rest % d;
            rest /= d;
        }

        // Expand in place, last block first so that reads stay ahead of
        // writes: after factor f the prefix of length Π_{≤f} N holds the
        // partial product.
        out[0] = 1.0;
        let mut len = 1;
        for (f, &k) in self.factors.iter().zip(&ks) {
            let d = f.dim();
            for a in (0..len).rev() {
                let c = out[a];
                for i in (0..d).rev() {
                    out[a * d + i] = c * f.vectors[(i, k)];
                }
            }
            len *= d;
        }
    }

    pub fn eigenvector(&self, joint: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.size()];
        self.fill_eigenvector(joint, &mut v);
        v
    }

    /// `log det(I + L) = Σ log(1 + λ)` over joint eigenvalues.
    pub fn log_det_shifted(&self) -> f64 {
        self.joint_values().iter().map(|&l| l.ln_1p()).sum()
    }

    /// Materializes the sorted joint eigensystem. Intended for small `N`.
    pub fn to_dense_sorted(&self) -> EigenSystem {
        let n = self.size();
        let spectrum = self.sorted_spectrum();
        let mut vectors = Matrix::zeros(n, n);
        let mut buf = vec![0.0; n];
        for (col, &(_, k)) in spectrum.iter().enumerate() {
            self.fill_eigenvector(k, &mut buf);
            vectors.column_mut(col).copy_from_slice(&buf);
        }
        EigenSystem {
            values: spectrum.iter().map(|s| s.0).collect(),
            vectors,
        }
    }
}
