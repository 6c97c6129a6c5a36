//! Fixed-point maximum-likelihood learning.
//!
//! * [`fit_picard`]: dense `L ← L + aLΔL` baseline, `O(N³)` per step.
//! * [`fit_krk`]: KrK-Picard, alternating factor updates through partial
//!   traces, batch (`O(nκ³ + N²)`) or stochastic (`O(N^{3/2} + bκ³)` with no
//!   `N × N` buffer).
//! * [`fit_joint`]: Joint-Picard, re-projecting the Picard step onto the
//!   nearest Kronecker product through the leading singular pair of a block
//!   rearrangement.
//!
//! With `a = 1` Picard and KrK-Picard never decrease the log-likelihood and
//! keep every iterate positive definite; that is checked at runtime by
//! [`check_pd`].

mod joint;
mod krk;
mod picard;
mod theta;

pub use joint::{fit_joint, joint_picard_step, joint_picard_update};
pub use krk::{
    fit_krk, krk_step_factor1, krk_step_factor2, krk_update_factor1, krk_update_factor2,
};
pub use picard::{fit_picard, picard_step, picard_update};
pub use theta::{theta_batch, theta_sparse, ThetaAccumulator, ThetaStorage};

pub(crate) use theta::sparse_accumulate;

use rand::seq::SliceRandom;

use crate::linalg::{cholesky_lower, sym_eig, symmetrize, Matrix, SpdMatrix};
use crate::model::KronKernel;
use crate::sampling::RngStream;
use crate::{Error, Result};

pub const DEFAULT_PD_FLOOR: f64 = 1e-10;

/// A rejected step is retried with `a/2` at most this many times.
const MAX_STEP_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Batch,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Step size `a`.
    pub step_size: f64,
    pub max_iter: usize,
    pub mode: FitMode,
    pub minibatch_size: usize,
    /// Stop once `|φ_k − φ_{k−1}| / |φ_{k−1}| < tol` (batch mode only).
    /// Zero disables the test.
    pub tol: f64,
    pub seed: u64,
    pub pd_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            step_size: 1.0,
            max_iter: 100,
            mode: FitMode::Batch,
            minibatch_size: 1,
            tol: 1e-4,
            seed: 0,
            pd_floor: DEFAULT_PD_FLOOR,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.minibatch_size == 0 {
            return Err(Error::InvalidArgument("minibatch size must be positive".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "convergence threshold must be non-negative, got {}",
                self.tol
            )));
        }
        if self.pd_floor.is_nan() || self.pd_floor < 0.0 {
            return Err(Error::InvalidArgument("pd floor must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cumulative wall-clock seconds spent in updates (monotonic clock).
    /// Objective evaluations the update itself does not need are excluded.
    pub seconds: f64,
    pub loglik: f64,
    /// Smallest eigenvalue over the factors; `None` for the dense baseline,
    /// where it would cost a full `N × N` eigendecomposition.
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitHistory {
    pub initial_loglik: f64,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl FitHistory {
    pub fn final_loglik(&self) -> f64 {
        self.records
            .last()
            .map(|r| r.loglik)
            .unwrap_or(self.initial_loglik)
    }

    pub(crate) fn relative_change_below(&self, prev: f64, next: f64, tol: f64) -> bool {
        tol > 0.0 && ((next - prev).abs() / prev.abs().max(f64::MIN_POSITIVE)) < tol
    }
}

/// Symmetrizes `m` and verifies its smallest eigenvalue exceeds `floor`.
///
/// The check is a Cholesky factorization of `M − floor·I`; only when it fails
/// is the eigendecomposition computed, to report the offending eigenvalue.
pub fn check_pd(m: &Matrix, floor: f64) -> Result<SpdMatrix> {
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
    let sym = symmetrize(m);
    let mut shifted = sym.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] -= floor;
    }
    if cholesky_lower(&shifted).is_some() {
        return Ok(SpdMatrix::new_unchecked(sym));
    }
    let min_eigenvalue = sym_eig(&sym)?.min_value();
    if min_eigenvalue > floor {
        Ok(SpdMatrix::new_unchecked(sym))
    } else {
        Err(Error::NotPositiveDefinite { min_eigenvalue })
    }
}

/// Runs `raw(a)` and accepts the first result that passes [`check_pd`],
/// halving `a` after each rejection.
pub(crate) fn guarded_step<F>(
    mut raw: F,
    step: f64,
    floor: f64,
    iteration: usize,
    factor: &'static str,
) -> Result<SpdMatrix>
where
    F: FnMut(f64) -> Result<Matrix>,
{
    let mut a = step;
    let mut last_min = f64::NAN;
    for _ in 0..=MAX_STEP_HALVINGS {
        match check_pd(&raw(a)?, floor) {
            Ok(s) => return Ok(s),
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                last_min = min_eigenvalue;
                a *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::PdViolation {
        iteration,
        factor,
        min_eigenvalue: last_min,
    })
}

/// Random factor `XᵀX` with `X` an `n × n` matrix of independent
/// `U[0, √2)` entries, filled row by row.
pub fn random_factor(n: usize, rng: &mut RngStream) -> SpdMatrix {
    let hi = 2f64.sqrt();
    let mut x = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            x[(i, j)] = rng.uniform() * hi;
        }
    }
    SpdMatrix::new_unchecked(x.transpose() * x)
}

/// Independent [`random_factor`]s for each dimension, in order.
pub fn random_kron_kernel(dims: &[usize], rng: &mut RngStream) -> Result<KronKernel> {
    KronKernel::new(dims.iter().map(|&d| random_factor(d, rng)).collect())
}

/// Minibatches drawn without replacement within each epoch.
pub(crate) struct MinibatchSchedule {
    order: Vec<usize>,
    pos: usize,
    size: usize,
    rng: RngStream,
}

impl MinibatchSchedule {
    pub(crate) fn new(n: usize, size: usize, seed: u64) -> Self {
        let mut s = MinibatchSchedule {
            order: (0..n).collect(),
            pos: 0,
            size: size.min(n).max(1),
            rng: RngStream::seed_from(seed),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    /// Next minibatch; a new epoch starts when the current one cannot fill
    /// a whole batch.
    pub(crate) fn next_batch(&mut self) -> &[usize] {
        if self.pos + self.size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let batch = &self.order[self.pos..self.pos + self.size];
        self.pos += self.size;
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_pd_examples() {
        assert!(check_pd(&Matrix::identity(3, 3), DEFAULT_PD_FLOOR).is_ok());
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        match check_pd(&m, DEFAULT_PD_FLOOR) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert!((min_eigenvalue + 0.1).abs() < 1e-14)
            }
            other => panic!("unexpected {other:?}"),
        }
        // Positive but below the floor.
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-12]);
        assert!(check_pd(&m, DEFAULT_PD_FLOOR).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            step_size: 0.0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            minibatch_size: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn schedule_covers_each_epoch_once() {
        let mut s = MinibatchSchedule::new(10, 3, 42);
        let mut seen = Vec::new();
        for _ in 0..3 {
            seen.extend_from_slice(s.next_batch());
        }
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9);
        // Fourth batch starts a fresh epoch rather than wrapping.
        assert_eq!(s.next_batch().len(), 3);
    }

    #[test]
    fn guarded_step_halves_until_pd() {
        // raw(a) = I - a·2I is PD only for a < 1/2.
        let mut calls = Vec::new();
        let out = guarded_step(
            |a| {
                calls.push(a);
                Ok(Matrix::identity(2, 2) * (1.0 - 2.0 * a))
            },
            1.0,
            DEFAULT_PD_FLOOR,
            1,
            "L1",
        )
        .unwrap();
        assert_eq!(calls, vec![1.0, 0.5, 0.25]);
        assert!((out[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn guarded_step_gives_up() {
        let err = guarded_step(|_| Ok(-Matrix::identity(2, 2)), 1.0, 0.0, 4, "L2").unwrap_err();
        assert!(matches!(
            err,
            Error::PdViolation {
                iteration: 4,
                factor: "L2",
                ..
            }
        ));
    }

    #[test]
    fn random_factor_is_deterministic_and_pd() {
        let a = random_factor(5, &mut RngStream::seed_from(3));
        let b = random_factor(5, &mut RngStream::seed_from(3));
        assert_eq!(a, b);
        assert!(check_pd(&a, 0.0).is_ok());
    }
}
