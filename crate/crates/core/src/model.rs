//! DPP semantics: L-ensemble kernels, subset probabilities, the mean
//! log-likelihood and its gradient.

use crate::linalg::{
    cholesky_lower, kron_all, kron_eig, log_det_from_cholesky, spd_inverse, symmetrize,
    KronEigenSystem, Matrix, SpdMatrix,
};
use crate::{Error, Result};

/// A sorted set of distinct item indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Subset(Vec<usize>);

impl Subset {
    /// Sorts `indices` and checks them against the ground-set size.
    pub fn new(mut indices: Vec<usize>, ground_size: usize) -> Result<Self> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateIndex(w[0]));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= ground_size {
                return Err(Error::IndexOutOfRange {
                    index: last,
                    size: ground_size,
                });
            }
        }
        Ok(Subset(indices))
    }

    pub fn empty() -> Self {
        Subset(Vec::new())
    }

    /// Items present in a bitmask, bit `i` <-> item `i`.
    pub fn from_mask(mask: u64) -> Self {
        Subset((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &i| m | (1u64 << i))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Observed subsets over a ground set of `ground_size` items.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    ground_size: usize,
    subsets: Vec<Subset>,
}

impl TrainingSet {
    pub fn new(ground_size: usize, subsets: Vec<Subset>) -> Result<Self> {
        for s in &subsets {
            if let Some(&last) = s.indices().last() {
                if last >= ground_size {
                    return Err(Error::IndexOutOfRange {
                        index: last,
                        size: ground_size,
                    });
                }
            }
        }
        Ok(TrainingSet {
            ground_size,
            subsets,
        })
    }

    /// Builds from raw index lists, validating each.
    pub fn from_lists(ground_size: usize, lists: Vec<Vec<usize>>) -> Result<Self> {
        let subsets = lists
            .into_iter()
            .map(|l| Subset::new(l, ground_size))
            .collect::<Result<_>>()?;
        Ok(TrainingSet {
            ground_size,
            subsets,
        })
    }

    pub fn ground_size(&self) -> usize {
        self.ground_size
    }

    pub fn subsets(&self) -> &[Subset] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Size of the largest subset.
    pub fn kappa(&self) -> usize {
        self.subsets.iter().map(Subset::len).max().unwrap_or(0)
    }
}

/// Anything that can act as a DPP L-ensemble kernel.
pub trait Kernel {
    fn ground_size(&self) -> usize;

    /// Entry `L[i, j]` without bounds checks beyond those of the storage.
    fn entry_unchecked(&self, i: usize, j: usize) -> f64;

    /// `log det(I + L)`.
    fn log_det_norm(&self) -> Result<f64>;

    /// `L_Y`; the 0×0 matrix for the empty subset.
    fn submatrix(&self, y: &Subset) -> Matrix {
        let idx = y.indices();
        Matrix::from_fn(idx.len(), idx.len(), |a, b| {
            self.entry_unchecked(idx[a], idx[b])
        })
    }
}

impl Kernel for SpdMatrix {
    fn ground_size(&self) -> usize {
        self.dim()
    }

    fn entry_unchecked(&self, i: usize, j: usize) -> f64 {
        self[(i, j)]
    }

    fn log_det_norm(&self) -> Result<f64> {
        let n = self.dim();
        let shifted = self.as_matrix() + Matrix::identity(n, n);
        cholesky_lower(&shifted)
            .map(|c| log_det_from_cholesky(&c))
            .ok_or_else(|| Error::Numerical("I + L is not positive definite".into()))
    }
}

/// `L = L_1 ⊗ … ⊗ L_m` stored by its factors.
#[derive(Debug, Clone, PartialEq)]
pub struct KronKernel {
    factors: Vec<SpdMatrix>,
    dims: Vec<usize>,
}

impl KronKernel {
    pub fn new(factors: Vec<SpdMatrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument(
                "a Kronecker kernel needs at least one factor".into(),
            ));
        }
        let dims = factors.iter().map(SpdMatrix::dim).collect();
        Ok(KronKernel { factors, dims })
    }

    pub fn pair(l1: SpdMatrix, l2: SpdMatrix) -> Self {
        let dims = vec![l1.dim(), l2.dim()];
        KronKernel {
            factors: vec![l1, l2],
            dims,
        }
    }

    pub fn factors(&self) -> &[SpdMatrix] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<SpdMatrix> {
        self.factors
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    /// `L[i, j] = Π_k L_k[i_k, j_k]`.
    pub fn entry(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.size();
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, size: n });
            }
        }
        Ok(self.entry_unchecked(i, j))
    }

    pub fn eig(&self) -> Result<KronEigenSystem> {
        kron_eig(&self.factors)
    }

    /// The dense `N × N` kernel. Only for small instances and oracles.
    pub fn materialize(&self) -> SpdMatrix {
        SpdMatrix::new_unchecked(kron_all(&self.factors))
    }
}

impl Kernel for KronKernel {
    fn ground_size(&self) -> usize {
        self.size()
    }

    fn entry_unchecked(&self, mut i: usize, mut j: usize) -> f64 {
        let mut prod = 1.0;
        for (f, &d) in self.factors.iter().zip(&self.dims).rev() {
            prod *= f[(i % d, j % d)];
            i /= d;
            j /= d;
        }
        prod
    }

    fn log_det_norm(&self) -> Result<f64> {
        Ok(self.eig()?.log_det_shifted())
    }
}

pub fn kron_entry(k: &KronKernel, i: usize, j: usize) -> Result<f64> {
    k.entry(i, j)
}

pub fn kron_submatrix(k: &KronKernel, y: &Subset) -> Result<Matrix> {
    if let Some(&last) = y.indices().last() {
        if last >= k.size() {
            return Err(Error::IndexOutOfRange {
                index: last,
                size: k.size(),
            });
        }
    }
    Ok(k.submatrix(y))
}

pub fn log_det_norm<K: Kernel>(k: &K) -> Result<f64> {
    k.log_det_norm()
}

/// Cholesky factor of a kernel submatrix, retrying once with diagonal
/// jitter `1e-10·tr(M)/|Y|`. `None` if both attempts fail.
pub(crate) fn factor_with_jitter(m: &Matrix) -> Option<Matrix> {
    if let Some(c) = cholesky_lower(m) {
        return Some(c);
    }
    let n = m.nrows();
    let jitter = 1e-10 * m.trace() / n as f64;
    if jitter.is_nan() || jitter <= 0.0 {
        return None;
    }
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] += jitter;
    }
    cholesky_lower(&shifted)
}

/// `log det L_Y` with the jitter retry; `subset` labels the error.
pub(crate) fn subset_log_det<K: Kernel>(k: &K, y: &Subset, subset: usize) -> Result<f64> {
    if y.is_empty() {
        return Ok(0.0);
    }
    factor_with_jitter(&k.submatrix(y))
        .map(|c| log_det_from_cholesky(&c))
        .ok_or(Error::SingularSubmatrix { subset })
}

fn check_ground<K: Kernel>(k: &K, t: &TrainingSet) -> Result<()> {
    if k.ground_size() != t.ground_size() {
        return Err(Error::DimensionMismatch(format!(
            "kernel over {} items, training set over {}",
            k.ground_size(),
            t.ground_size()
        )));
    }
    if t.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    Ok(())
}

/// `φ(L) = (1/n) Σ_i log det L_{Y_i} − log det(I + L)`.
pub fn log_likelihood<K: Kernel>(k: &K, t: &TrainingSet) -> Result<f64> {
    check_ground(k, t)?;
    let norm = k.log_det_norm()?;
    Ok(mean_subset_log_det(k, t)? - norm)
}

pub(crate) fn mean_subset_log_det<K: Kernel>(k: &K, t: &TrainingSet) -> Result<f64> {
    let mut total = 0.0;
    for (i, y) in t.subsets().iter().enumerate() {
        total += subset_log_det(k, y, i)?;
    }
    Ok(total / t.len() as f64)
}

/// `Δ = ∇φ(L) = (1/n) Σ_i U_i L_{Y_i}⁻¹ U_iᵀ − (I + L)⁻¹` for a dense kernel.
pub fn grad_delta(l: &SpdMatrix, t: &TrainingSet) -> Result<Matrix> {
    check_ground(l, t)?;
    let n = l.dim();
    let mut delta = crate::learning::theta_batch(l, t)?.densify();
    let shifted = l.as_matrix() + Matrix::identity(n, n);
    let inv = spd_inverse(&shifted)
        .ok_or_else(|| Error::Numerical("I + L is not positive definite".into()))?;
    delta -= inv;
    Ok(symmetrize(&delta))
}

/// Marginal kernel `K = L(I + L)⁻¹ = I − (I + L)⁻¹`.
pub fn marginal_kernel(l: &SpdMatrix) -> Result<Matrix> {
    let n = l.dim();
    let id = Matrix::identity(n, n);
    let inv = spd_inverse(&(l.as_matrix() + &id))
        .ok_or_else(|| Error::Numerical("I + L is not positive definite".into()))?;
    Ok(symmetrize(&(id - inv)))
}

/// `L = K(I − K)⁻¹`, defined when `I − K` is invertible.
pub fn kernel_from_marginal(k: &Matrix) -> Result<Matrix> {
    let n = k.nrows();
    let complement = Matrix::identity(n, n) - k;
    let inv = complement
        .try_inverse()
        .ok_or_else(|| Error::Numerical("I − K is singular".into()))?;
    Ok(symmetrize(&(k * inv)))
}

/// `P(Y) = det(L_Y) / det(I + L)`.
pub fn subset_prob<K: Kernel>(k: &K, y: &Subset) -> Result<f64> {
    if let Some(&last) = y.indices().last() {
        if last >= k.ground_size() {
            return Err(Error::IndexOutOfRange {
                index: last,
                size: k.ground_size(),
            });
        }
    }
    let norm = k.log_det_norm()?;
    Ok(subset_prob_with_norm(k, y, norm))
}

pub(crate) fn subset_prob_with_norm<K: Kernel>(k: &K, y: &Subset, log_norm: f64) -> f64 {
    if y.is_empty() {
        return (-log_norm).exp();
    }
    let sub = k.submatrix(y);
    match cholesky_lower(&sub) {
        Some(c) => (log_det_from_cholesky(&c) - log_norm).exp(),
        // Numerically singular: fall back to an LU determinant, clamped at 0.
        None => sub.determinant().max(0.0) * (-log_norm).exp(),
    }
}
