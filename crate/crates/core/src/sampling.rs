//! Exact two-phase DPP sampling for dense and Kronecker kernels.
//!
//! Phase 1 keeps eigenvector `k` with probability `λ_k / (1 + λ_k)`.
//! Phase 2 draws items one at a time from the elementary DPP spanned by the
//! kept eigenvectors. For a Kronecker kernel only the factor
//! eigendecompositions are computed up front; each kept joint eigenvector is
//! expanded into the `|J| × N` working block in `O(N)`.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{EigenSystem, KronEigenSystem};
use crate::model::{subset_prob_with_norm, Kernel, KronKernel, Subset};
use crate::{Error, Result};

/// Eigenvalues below this are treated as exactly zero.
pub const EIGEN_CLAMP: f64 = 1e-14;

/// Vectors whose norm drops below this during re-orthonormalization signal
/// a rank-deficient working basis.
const ORTHO_TOL: f64 = 1e-12;

/// Tolerated negative round-off in eigenvalues before rejecting them.
const NEGATIVE_TOL: f64 = 1e-12;

/// Largest ground set [`enumerate_distribution`] accepts.
pub const ENUMERATION_CAP: usize = 20;

/// Seeded deterministic stream (ChaCha8).
#[derive(Debug, Clone)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn seed_from(seed: u64) -> Self {
        RngStream(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleTimings {
    pub phase1_seconds: f64,
    pub phase2_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub subset: Subset,
    /// Kept positions in the ascending spectrum.
    pub selected: Vec<usize>,
    pub timings: SampleTimings,
}

/// Phase 1. Consumes exactly one uniform per eigenvalue.
pub fn select_elementary(values: &[f64], rng: &mut RngStream) -> Result<Vec<usize>> {
    let mut kept = Vec::new();
    for (k, &l) in values.iter().enumerate() {
        if !l.is_finite() {
            return Err(Error::NonFinite);
        }
        if l < -NEGATIVE_TOL {
            return Err(Error::NegativeEigenvalue(l));
        }
        let l = if l < EIGEN_CLAMP { 0.0 } else { l };
        let u = rng.uniform();
        if u < l / (1.0 + l) {
            kept.push(k);
        }
    }
    Ok(kept)
}

/// `E|Y| = Σ λ / (1 + λ)`, same clamping as [`select_elementary`].
pub fn expected_size(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|&l| if l < EIGEN_CLAMP { 0.0 } else { l / (1.0 + l) })
        .sum()
}

/// `Var|Y| = Σ p(1 − p)` with `p = λ / (1 + λ)`.
pub fn size_variance(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|&l| {
            let p = if l < EIGEN_CLAMP { 0.0 } else { l / (1.0 + l) };
            p * (1.0 - p)
        })
        .sum()
}

/// Phase 2 over the row-major `k × n` block of orthonormal vectors.
fn elementary_draw(mut basis: Vec<f64>, n: usize, rng: &mut RngStream) -> Result<Subset> {
    let mut k = basis.len() / n;
    let mut items = Vec::with_capacity(k);
    let mut weights = vec![0.0; n];
    while k > 0 {
        weights.iter_mut().for_each(|w| *w = 0.0);
        for row in basis[..k * n].chunks_exact(n) {
            for (w, x) in weights.iter_mut().zip(row) {
                *w += x * x;
            }
        }
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::Numerical("elementary basis vanished".into()));
        }
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        let mut item = None;
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            acc += w;
            item = Some(i);
            if target < acc {
                break;
            }
        }
        let i = item.expect("positive total weight");
        items.push(i);

        // Pivot on the vector with the largest |v_i| and eliminate coordinate
        // i from the others.
        let pivot = (0..k)
            .max_by(|&a, &b| basis[a * n + i].abs().total_cmp(&basis[b * n + i].abs()))
            .expect("non-empty basis");
        let last = k - 1;
        if pivot != last {
            for c in 0..n {
                basis.swap(pivot * n + c, last * n + c);
            }
        }
        let (rest, piv) = basis.split_at_mut(last * n);
        let piv = &piv[..n];
        let pv = piv[i];
        for row in rest.chunks_exact_mut(n) {
            let f = row[i] / pv;
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(piv) {
                    *x -= f * p;
                }
            }
            row[i] = 0.0;
        }
        k = last;

        // Modified Gram–Schmidt on the remaining k vectors.
        for r in 0..k {
            let (done, tail) = basis.split_at_mut(r * n);
            let row = &mut tail[..n];
            for q in done.chunks_exact(n) {
                let d: f64 = row.iter().zip(q).map(|(a, b)| a * b).sum();
                for (x, b) in row.iter_mut().zip(q) {
                    *x -= d * b;
                }
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < ORTHO_TOL {
                return Err(Error::Numerical(format!(
                    "rank deficiency during orthonormalization (norm {norm:e})"
                )));
            }
            row.iter_mut().for_each(|x| *x /= norm);
        }
        basis.truncate(k * n);
    }
    items.sort_unstable();
    Subset::new(items, n)
}

/// Exact sample from the DPP with eigensystem `eig` (values ascending).
pub fn sample_dense(eig: &EigenSystem, rng: &mut RngStream) -> Result<SampleReport> {
    let n = eig.dim();
    let t0 = Instant::now();
    let selected = select_elementary(&eig.values, rng)?;
    let phase1_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mut basis = Vec::with_capacity(selected.len() * n);
    for &k in &selected {
        basis.extend(eig.vectors.column(k).iter());
    }
    let subset = elementary_draw(basis, n, rng)?;
    Ok(SampleReport {
        subset,
        selected,
        timings: SampleTimings {
            phase1_seconds,
            phase2_seconds: t1.elapsed().as_secs_f64(),
        },
    })
}

/// Sampler holding the factor eigendecompositions and the sorted joint
/// spectrum; reusable across draws.
#[derive(Debug, Clone)]
pub struct KronSampler {
    eig: KronEigenSystem,
    values: Vec<f64>,
    joint: Vec<usize>,
}

impl KronSampler {
    pub fn new(k: &KronKernel) -> Result<Self> {
        let eig = k.eig()?;
        let (values, joint) = eig.sorted_spectrum().into_iter().unzip();
        Ok(KronSampler { eig, values, joint })
    }

    pub fn ground_size(&self) -> usize {
        self.eig.size()
    }

    /// Joint eigenvalues, ascending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<SampleReport> {
        let n = self.eig.size();
        let t0 = Instant::now();
        let selected = select_elementary(&self.values, rng)?;
        let phase1_seconds = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let mut basis = vec![0.0; selected.len() * n];
        for (row, &pos) in basis.chunks_exact_mut(n).zip(&selected) {
            self.eig.fill_eigenvector(self.joint[pos], row);
        }
        let subset = elementary_draw(basis, n, rng)?;
        Ok(SampleReport {
            subset,
            selected,
            timings: SampleTimings {
                phase1_seconds,
                phase2_seconds: t1.elapsed().as_secs_f64(),
            },
        })
    }
}

/// One draw from a Kronecker kernel. Use [`KronSampler`] for repeated draws.
pub fn sample_kron(k: &KronKernel, rng: &mut RngStream) -> Result<SampleReport> {
    KronSampler::new(k)?.sample(rng)
}

/// Exact distribution over all `2^N` subsets, indexed by bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetDistribution {
    ground_size: usize,
    probs: Vec<f64>,
}

impl SubsetDistribution {
    pub fn ground_size(&self) -> usize {
        self.ground_size
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, y: &Subset) -> f64 {
        self.probs[y.mask() as usize]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `P(A ⊆ Y)`.
    pub fn inclusion_prob(&self, a: &Subset) -> f64 {
        let m = a.mask() as usize;
        self.probs
            .iter()
            .enumerate()
            .filter(|(y, _)| y & m == m)
            .map(|(_, p)| p)
            .sum()
    }

    /// Total-variation distance to the empirical distribution of `counts`
    /// (indexed by bitmask).
    pub fn tv_to_counts(&self, counts: &[u64]) -> f64 {
        assert_eq!(counts.len(), self.probs.len());
        let total: u64 = counts.iter().sum();
        let total = total.max(1) as f64;
        0.5 * self
            .probs
            .iter()
            .zip(counts)
            .map(|(p, &c)| (p - c as f64 / total).abs())
            .sum::<f64>()
    }

    pub fn tv_to_samples<'a, I>(&self, samples: I) -> f64
    where
        I: IntoIterator<Item = &'a Subset>,
    {
        let mut counts = vec![0u64; self.probs.len()];
        for y in samples {
            counts[y.mask() as usize] += 1;
        }
        self.tv_to_counts(&counts)
    }
}

/// Exhaustive `P(Y)` for every subset. Refuses `N > 20`.
pub fn enumerate_distribution<K: Kernel>(k: &K) -> Result<SubsetDistribution> {
    let n = k.ground_size();
    if n > ENUMERATION_CAP {
        return Err(Error::TooLarge {
            size: n,
            cap: ENUMERATION_CAP,
        });
    }
    let log_norm = k.log_det_norm()?;
    let probs = (0..1u64 << n)
        .map(|mask| subset_prob_with_norm(k, &Subset::from_mask(mask), log_norm))
        .collect();
    Ok(SubsetDistribution { ground_size: n, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, SpdMatrix};

    #[test]
    fn zero_spectrum_selects_nothing() {
        let mut rng = RngStream::seed_from(1);
        for _ in 0..100 {
            assert!(select_elementary(&[0.0, 0.0, 0.0], &mut rng).unwrap().is_empty());
        }
    }

    #[test]
    fn selection_frequencies() {
        let mut rng = RngStream::seed_from(2);
        let draws = 100_000;
        let mut hits = [0usize; 2];
        for _ in 0..draws {
            for k in select_elementary(&[1.0, 3.0], &mut rng).unwrap() {
                hits[k] += 1;
            }
        }
        for (h, p) in hits.iter().zip([0.5, 0.75]) {
            let sd = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((*h as f64 / draws as f64 - p).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn negative_eigenvalue_rejected() {
        let mut rng = RngStream::seed_from(0);
        assert!(matches!(
            select_elementary(&[1.0, -0.5], &mut rng),
            Err(Error::NegativeEigenvalue(_))
        ));
        // Round-off below zero is clamped.
        assert!(select_elementary(&[-1e-15], &mut rng).unwrap().is_empty());
    }

    #[test]
    fn sample_size_equals_selection() {
        let l = SpdMatrix::new(crate::linalg::Matrix::from_row_slice(
            3,
            3,
            &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0],
        ))
        .unwrap();
        let eig = sym_eig(&l).unwrap();
        let mut rng = RngStream::seed_from(5);
        for _ in 0..1000 {
            let r = sample_dense(&eig, &mut rng).unwrap();
            assert_eq!(r.subset.len(), r.selected.len());
        }
    }

    #[test]
    fn enumeration_examples() {
        let d = enumerate_distribution(&SpdMatrix::identity(2)).unwrap();
        assert!(d.probs().iter().all(|p| (p - 0.25).abs() < 1e-15));
        let d = enumerate_distribution(&SpdMatrix::from_diagonal(&[3.0]).unwrap()).unwrap();
        assert!((d.probs()[0] - 0.25).abs() < 1e-15);
        assert!((d.probs()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn enumeration_cap() {
        let k = SpdMatrix::identity(21);
        assert!(matches!(enumerate_distribution(&k), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn seed_determinism() {
        let k = KronKernel::pair(
            SpdMatrix::from_diagonal(&[1.0, 2.0]).unwrap(),
            SpdMatrix::from_diagonal(&[0.5, 1.5, 3.0]).unwrap(),
        );
        let s = KronSampler::new(&k).unwrap();
        let run = |seed| {
            let mut rng = RngStream::seed_from(seed);
            (0..50).map(|_| s.sample(&mut rng).unwrap().subset).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }
}
