//! The data statistic `Θ = (1/n) Σ_i U_i L_{Y_i}⁻¹ U_iᵀ`.

use crate::linalg::{lower_triangular_inverse, log_det_from_cholesky, Matrix};
use crate::model::{factor_with_jitter, Kernel, Subset, TrainingSet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaStorage {
    /// Full `N × N` symmetric matrix.
    Dense(Matrix),
    /// Nonzeros confined to `support × support`; `values[(s, t)]` is the
    /// entry at `(support[s], support[t])`. `support` is sorted.
    Sparse { support: Vec<usize>, values: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaAccumulator {
    ground_size: usize,
    storage: ThetaStorage,
    n_contrib: usize,
}

impl ThetaAccumulator {
    /// Wraps an explicit dense matrix. Used to pin `Θ` in tests, e.g. to
    /// `(I + L)⁻¹` for a stationary point.
    pub fn from_dense(m: Matrix, n_contrib: usize) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("theta must be square".into()));
        }
        Ok(ThetaAccumulator {
            ground_size: m.nrows(),
            storage: ThetaStorage::Dense(crate::linalg::symmetrize(&m)),
            n_contrib,
        })
    }

    pub fn ground_size(&self) -> usize {
        self.ground_size
    }

    pub fn storage(&self) -> &ThetaStorage {
        &self.storage
    }

    pub fn n_contrib(&self) -> usize {
        self.n_contrib
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, ThetaStorage::Sparse { .. })
    }

    /// Number of stored values (`N²` dense, `z²` sparse).
    pub fn stored_entries(&self) -> usize {
        match &self.storage {
            ThetaStorage::Dense(m) => m.len(),
            ThetaStorage::Sparse { values, .. } => values.len(),
        }
    }

    pub fn nnz(&self) -> usize {
        let values = match &self.storage {
            ThetaStorage::Dense(m) => m,
            ThetaStorage::Sparse { values, .. } => values,
        };
        values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        match &self.storage {
            ThetaStorage::Dense(m) => m[(p, q)],
            ThetaStorage::Sparse { support, values } => {
                match (support.binary_search(&p), support.binary_search(&q)) {
                    (Ok(s), Ok(t)) => values[(s, t)],
                    _ => 0.0,
                }
            }
        }
    }

    /// Dense `N × N` copy. Allocates `N²`; meant for oracles.
    pub fn densify(&self) -> Matrix {
        match &self.storage {
            ThetaStorage::Dense(m) => m.clone(),
            ThetaStorage::Sparse { support, values } => {
                let mut out = Matrix::zeros(self.ground_size, self.ground_size);
                for (t, &q) in support.iter().enumerate() {
                    for (s, &p) in support.iter().enumerate() {
                        out[(p, q)] = values[(s, t)];
                    }
                }
                out
            }
        }
    }
}

fn inverse_from_cholesky(c: &Matrix) -> Matrix {
    let ci = lower_triangular_inverse(c);
    ci.transpose() * ci
}

/// Dense `Θ` plus the mean `log det L_{Y_i}` from the same factorizations.
pub(crate) fn batch_pass<K: Kernel>(k: &K, t: &TrainingSet) -> Result<(ThetaAccumulator, f64)> {
    let n = k.ground_size();
    if t.ground_size() != n {
        return Err(Error::DimensionMismatch(format!(
            "kernel over {n} items, training set over {}",
            t.ground_size()
        )));
    }
    if t.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let scale = 1.0 / t.len() as f64;
    let mut theta = Matrix::zeros(n, n);
    let mut log_det_sum = 0.0;
    for (i, y) in t.subsets().iter().enumerate() {
        if y.is_empty() {
            continue;
        }
        let c = factor_with_jitter(&k.submatrix(y)).ok_or(Error::SingularSubmatrix { subset: i })?;
        log_det_sum += log_det_from_cholesky(&c);
        let inv = inverse_from_cholesky(&c);
        let idx = y.indices();
        for (b, &q) in idx.iter().enumerate() {
            for (a, &p) in idx.iter().enumerate() {
                theta[(p, q)] += scale * inv[(a, b)];
            }
        }
    }
    let acc = ThetaAccumulator {
        ground_size: n,
        storage: ThetaStorage::Dense(crate::linalg::symmetrize(&theta)),
        n_contrib: t.len(),
    };
    Ok((acc, log_det_sum * scale))
}

/// Dense `Θ` over the whole training set. Costs `O(nκ³ + N²)`.
pub fn theta_batch<K: Kernel>(k: &K, t: &TrainingSet) -> Result<ThetaAccumulator> {
    batch_pass(k, t).map(|(theta, _)| theta)
}

/// `scale · Σ U_i L_{Y_i}⁻¹ U_iᵀ` stored on the union of the subsets.
/// `labels` names the subsets in errors. Never allocates `N × N`.
pub(crate) fn sparse_accumulate<K: Kernel>(
    k: &K,
    subsets: &[&Subset],
    labels: &[usize],
    scale: f64,
) -> Result<ThetaAccumulator> {
    let n = k.ground_size();
    let mut support: Vec<usize> = subsets.iter().flat_map(|s| s.indices().iter().copied()).collect();
    support.sort_unstable();
    support.dedup();
    if let Some(&last) = support.last() {
        if last >= n {
            return Err(Error::IndexOutOfRange { index: last, size: n });
        }
    }
    let z = support.len();
    let mut values = Matrix::zeros(z, z);
    for (y, &label) in subsets.iter().zip(labels) {
        if y.is_empty() {
            continue;
        }
        let c = factor_with_jitter(&k.submatrix(y)).ok_or(Error::SingularSubmatrix { subset: label })?;
        let inv = inverse_from_cholesky(&c);
        let local: Vec<usize> = y
            .indices()
            .iter()
            .map(|p| support.binary_search(p).expect("index in support"))
            .collect();
        for (b, &t) in local.iter().enumerate() {
            for (a, &s) in local.iter().enumerate() {
                values[(s, t)] += scale * inv[(a, b)];
            }
        }
    }
    Ok(ThetaAccumulator {
        ground_size: n,
        storage: ThetaStorage::Sparse {
            support,
            values: crate::linalg::symmetrize(&values),
        },
        n_contrib: subsets.len(),
    })
}

/// Sparse minibatch statistic `(1/b) Σ_{Y ∈ batch} U_Y L_Y⁻¹ U_Yᵀ`, stored
/// on the `z` items of the batch union in `O(z²)` memory.
pub fn theta_sparse<K: Kernel>(k: &K, minibatch: &[Subset]) -> Result<ThetaAccumulator> {
    if minibatch.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let refs: Vec<&Subset> = minibatch.iter().collect();
    let labels: Vec<usize> = (0..minibatch.len()).collect();
    sparse_accumulate(k, &refs, &labels, 1.0 / minibatch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use crate::model::KronKernel;

    fn small_kernel() -> KronKernel {
        KronKernel::pair(
            SpdMatrix::new(Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap(),
            SpdMatrix::new(Matrix::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 0.8])).unwrap(),
        )
    }

    #[test]
    fn singleton_theta() {
        let k = small_kernel();
        let t = TrainingSet::from_lists(4, vec![vec![2]]).unwrap();
        let th = theta_batch(&k, &t).unwrap().densify();
        let lii = k.entry(2, 2).unwrap();
        let mut expected = Matrix::zeros(4, 4);
        expected[(2, 2)] = 1.0 / lii;
        assert!((th - expected).norm() < 1e-15);
    }

    #[test]
    fn programmatic_empty_subsets_give_zero() {
        let k = small_kernel();
        let t = TrainingSet::from_lists(4, vec![vec![], vec![]]).unwrap();
        assert_eq!(theta_batch(&k, &t).unwrap().densify(), Matrix::zeros(4, 4));
    }

    #[test]
    fn sparse_pair_is_scattered_inverse() {
        let k = small_kernel();
        let y = Subset::new(vec![0, 1], 4).unwrap();
        let th = theta_sparse(&k, std::slice::from_ref(&y)).unwrap();
        assert!(th.is_sparse());
        assert_eq!(th.stored_entries(), 4);
        let inv = k.submatrix(&y).try_inverse().unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((th.get(a, b) - inv[(a, b)]).abs() < 1e-14);
            }
        }
        assert_eq!(th.get(2, 2), 0.0);
    }

    #[test]
    fn sparse_disjoint_pairs_block_diagonal() {
        let k = small_kernel();
        let batch = vec![Subset::new(vec![0, 1], 4).unwrap(), Subset::new(vec![2, 3], 4).unwrap()];
        let th = theta_sparse(&k, &batch).unwrap();
        assert_eq!(th.nnz(), 8);
        let d = th.densify();
        for p in 0..2 {
            for q in 2..4 {
                assert_eq!(d[(p, q)], 0.0);
                assert_eq!(d[(q, p)], 0.0);
            }
        }
    }

    #[test]
    fn sparse_rejects_empty_minibatch() {
        assert!(theta_sparse(&small_kernel(), &[]).is_err());
    }
}
