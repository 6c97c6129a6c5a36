//! Joint-Picard: Kronecker re-projection of the Picard step.
//!
//! `L + LΔL = L(L⁻¹ + Δ)L`. The surrogate `L⁻¹ + Δ` is projected onto the
//! nearest `σ U ⊗ V` through the leading singular pair of its block
//! rearrangement, then mapped back as `L_1 U L_1` and `L_2 V L_2`.

use std::time::{Duration, Instant};

use super::theta::{batch_pass, ThetaAccumulator, ThetaStorage};
use super::{check_pd, FitConfig, FitHistory, FitMode, IterationRecord, DEFAULT_PD_FLOOR, MAX_STEP_HALVINGS};
use crate::linalg::{
    leading_singular_pair, spd_inverse, sym_eig, symmetrize, EigenSystem, Matrix, RearrangedMatrix,
    SpdMatrix, DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL,
};
use crate::model::{KronKernel, TrainingSet};
use crate::{Error, Result};

/// Rearrangement of `L⁻¹ + Θ − (I + L)⁻¹`, assembled term by term so that no
/// `N × N` matrix is formed besides a dense `Θ` the caller already holds.
fn rearranged_surrogate(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    e1: &EigenSystem,
    e2: &EigenSystem,
    theta: &ThetaAccumulator,
) -> Result<RearrangedMatrix> {
    let (n1, n2) = (l1.dim(), l2.dim());
    if theta.ground_size() != n1 * n2 {
        return Err(Error::DimensionMismatch(format!(
            "theta over {} items, factors give {}",
            theta.ground_size(),
            n1 * n2
        )));
    }
    let inv1 = spd_inverse(l1).ok_or_else(|| Error::Numerical("L1 is singular".into()))?;
    let inv2 = spd_inverse(l2).ok_or_else(|| Error::Numerical("L2 is singular".into()))?;

    // L⁻¹ = L_1⁻¹ ⊗ L_2⁻¹ rearranges to vec_r(L_1⁻¹) vec(L_2⁻¹)ᵀ.
    let left = Matrix::from_fn(n1 * n1, 1, |r, _| inv1[(r / n1, r % n1)]);
    let right = Matrix::from_column_slice(1, n2 * n2, inv2.as_slice());
    let mut r = left * right;

    // (I + L)⁻¹ entry ((i,a),(j,b)) = Σ_{k,c} P1[i,k] P1[j,k] P2[a,c] P2[b,c] / (1 + d1_k d2_c).
    let (p1, p2) = (&e1.vectors, &e2.vectors);
    let mut t = Matrix::zeros(n1 * n1, n2);
    for c in 0..n2 {
        for i in 0..n1 {
            for j in 0..n1 {
                let mut acc = 0.0;
                for k in 0..n1 {
                    acc += p1[(i, k)] * p1[(j, k)] / (1.0 + e1.values[k] * e2.values[c]);
                }
                t[(i * n1 + j, c)] = acc;
            }
        }
    }
    let z = Matrix::from_fn(n2, n2 * n2, |c, col| p2[(col % n2, c)] * p2[(col / n2, c)]);
    r.gemm(-1.0, &t, &z, 1.0);

    let mut add = |p: usize, q: usize, x: f64| {
        let (i, a, j, b) = (p / n2, p % n2, q / n2, q % n2);
        r[(i * n1 + j, b * n2 + a)] += x;
    };
    match theta.storage() {
        ThetaStorage::Dense(th) => {
            for q in 0..n1 * n2 {
                for p in 0..n1 * n2 {
                    let x = th[(p, q)];
                    if x != 0.0 {
                        add(p, q, x);
                    }
                }
            }
        }
        ThetaStorage::Sparse { support, values } => {
            for (tq, &q) in support.iter().enumerate() {
                for (sp, &p) in support.iter().enumerate() {
                    add(p, q, values[(sp, tq)]);
                }
            }
        }
    }
    Ok(RearrangedMatrix { matrix: r, n1, n2 })
}

/// Full-step targets `(αL_1UL_1, (σ/α)L_2VL_2)`.
fn joint_targets(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    e1: &EigenSystem,
    e2: &EigenSystem,
    theta: &ThetaAccumulator,
) -> Result<(Matrix, Matrix)> {
    let r = rearranged_surrogate(l1, l2, e1, e2, theta)?;
    let triple = leading_singular_pair(&r.matrix, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)?;
    let u = symmetrize(&r.left_to_matrix(triple.u.as_slice()));
    let v = symmetrize(&r.right_to_matrix(triple.v.as_slice()));
    let (l1m, l2m) = (l1.as_matrix(), l2.as_matrix());
    let lul = symmetrize(&(l1m * u.clone() * l1m));
    let lvl = symmetrize(&(l2m * v * l2m));
    let (nu, nv) = (lul.norm(), lvl.norm());
    if !(nu > 0.0 && nv > 0.0) {
        return Err(Error::Numerical("degenerate singular vectors".into()));
    }
    let sign = if u[(0, 0)] < 0.0 { -1.0 } else { 1.0 };
    let alpha = sign * (triple.sigma * nv / nu).sqrt();
    Ok((lul * alpha, lvl * (triple.sigma / alpha)))
}

fn blend(l: &Matrix, target: &Matrix, a: f64) -> Matrix {
    symmetrize(&(l + (target - l) * a))
}

/// Unchecked Joint-Picard update `(L_1 + a(αL_1UL_1 − L_1), L_2 + a((σ/α)L_2VL_2 − L_2))`.
pub fn joint_picard_update(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    theta: &ThetaAccumulator,
    a: f64,
) -> Result<(Matrix, Matrix)> {
    let (t1, t2) = joint_targets(l1, l2, &sym_eig(l1)?, &sym_eig(l2)?, theta)?;
    Ok((blend(l1, &t1, a), blend(l2, &t2, a)))
}

/// One Joint-Picard step on the full training set, PD-checked at the
/// default floor.
pub fn joint_picard_step(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    t: &TrainingSet,
    a: f64,
) -> Result<(SpdMatrix, SpdMatrix)> {
    let (theta, _) = batch_pass(&KronKernel::pair(l1.clone(), l2.clone()), t)?;
    let (m1, m2) = joint_picard_update(l1, l2, &theta, a)?;
    Ok((check_pd(&m1, DEFAULT_PD_FLOOR)?, check_pd(&m2, DEFAULT_PD_FLOOR)?))
}

fn guarded_pair(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    targets: &(Matrix, Matrix),
    cfg: &FitConfig,
    iteration: usize,
) -> Result<(SpdMatrix, SpdMatrix)> {
    let mut a = cfg.step_size;
    let mut last = (f64::NAN, "L1");
    for _ in 0..=MAX_STEP_HALVINGS {
        let first = check_pd(&blend(l1, &targets.0, a), cfg.pd_floor);
        let second = check_pd(&blend(l2, &targets.1, a), cfg.pd_floor);
        match (first, second) {
            (Ok(s1), Ok(s2)) => return Ok((s1, s2)),
            (Err(Error::NotPositiveDefinite { min_eigenvalue }), _) => last = (min_eigenvalue, "L1"),
            (_, Err(Error::NotPositiveDefinite { min_eigenvalue })) => last = (min_eigenvalue, "L2"),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
        a *= 0.5;
    }
    Err(Error::PdViolation {
        iteration,
        factor: last.1,
        min_eigenvalue: last.0,
    })
}

/// Joint-Picard iteration; batch mode only. Dense `Θ` and the
/// `N_1² × N_2²` rearrangement make each step `O(N²)` memory.
pub fn fit_joint(
    k0: &KronKernel,
    t: &TrainingSet,
    cfg: &FitConfig,
) -> Result<(KronKernel, FitHistory)> {
    cfg.validate()?;
    if cfg.mode != FitMode::Batch {
        return Err(Error::InvalidArgument("Joint-Picard supports batch mode only".into()));
    }
    let [l1, l2] = k0.factors() else {
        return Err(Error::InvalidArgument(format!(
            "Joint-Picard learns two factors, kernel has {}",
            k0.factors().len()
        )));
    };
    if k0.size() != t.ground_size() {
        return Err(Error::DimensionMismatch(format!(
            "kernel over {} items, training set over {}",
            k0.size(),
            t.ground_size()
        )));
    }
    if t.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let (mut l1, mut l2) = (l1.clone(), l2.clone());
    let objective = |e1: &EigenSystem, e2: &EigenSystem, mean_ld: f64| {
        let norm: f64 = e1
            .values
            .iter()
            .map(|&d1| e2.values.iter().map(|&d2| (d1 * d2).ln_1p()).sum::<f64>())
            .sum();
        mean_ld - norm
    };
    let mut e1 = sym_eig(&l1)?;
    let mut e2 = sym_eig(&l2)?;
    let (mut theta, mean_ld) = batch_pass(&KronKernel::pair(l1.clone(), l2.clone()), t)?;
    let mut phi = objective(&e1, &e2, mean_ld);
    let mut history = FitHistory {
        initial_loglik: phi,
        ..FitHistory::default()
    };
    let mut elapsed = Duration::ZERO;
    for it in 1..=cfg.max_iter {
        let start = Instant::now();
        let targets = joint_targets(&l1, &l2, &e1, &e2, &theta)?;
        (l1, l2) = guarded_pair(&l1, &l2, &targets, cfg, it)?;
        e1 = sym_eig(&l1)?;
        e2 = sym_eig(&l2)?;
        let (next_theta, mean_ld) = batch_pass(&KronKernel::pair(l1.clone(), l2.clone()), t)?;
        theta = next_theta;
        let next_phi = objective(&e1, &e2, mean_ld);
        elapsed += start.elapsed();
        history.records.push(IterationRecord {
            iteration: it,
            seconds: elapsed.as_secs_f64(),
            loglik: next_phi,
            min_eigenvalue: Some(e1.min_value().min(e2.min_value())),
        });
        if history.relative_change_below(phi, next_phi, cfg.tol) {
            history.converged = true;
            break;
        }
        phi = next_phi;
    }
    Ok((KronKernel::pair(l1, l2), history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron_product, rearrange, relative_frobenius};

    fn factor(vals: &[f64]) -> SpdMatrix {
        let n = (vals.len() as f64).sqrt() as usize;
        SpdMatrix::new(Matrix::from_row_slice(n, n, vals)).unwrap()
    }

    #[test]
    fn surrogate_matches_dense_rearrangement() {
        let l1 = factor(&[2.0, 0.3, 0.3, 1.0]);
        let l2 = factor(&[1.5, -0.2, 0.1, -0.2, 0.8, 0.0, 0.1, 0.0, 1.2]);
        let k = KronKernel::pair(l1.clone(), l2.clone());
        let t = TrainingSet::from_lists(6, vec![vec![0, 4], vec![1, 2, 5], vec![3]]).unwrap();
        let theta = crate::learning::theta_batch(&k, &t).unwrap();
        let l = k.materialize();
        let linv = spd_inverse(&l).unwrap();
        let ipl = spd_inverse(&(l.as_matrix() + Matrix::identity(6, 6))).unwrap();
        let dense = rearrange(&(linv + theta.densify() - ipl), 2, 3).unwrap();
        let fast = rearranged_surrogate(&l1, &l2, &sym_eig(&l1).unwrap(), &sym_eig(&l2).unwrap(), &theta).unwrap();
        assert!((fast.matrix - dense.matrix).norm() < 1e-12);
    }

    #[test]
    fn zero_step_is_identity() {
        let l1 = factor(&[2.0, 0.3, 0.3, 1.0]);
        let l2 = factor(&[1.5, -0.2, -0.2, 0.8]);
        let t = TrainingSet::from_lists(4, vec![vec![0, 3]]).unwrap();
        let (m1, m2) = joint_picard_step(&l1, &l2, &t, 0.0).unwrap();
        assert!(relative_frobenius(&m1, &l1) < 1e-15);
        assert!(relative_frobenius(&m2, &l2) < 1e-15);
    }

    #[test]
    fn stationary_input_is_reconstructed() {
        let l1 = factor(&[2.0, 0.3, 0.3, 1.0]);
        let l2 = factor(&[1.5, -0.2, -0.2, 0.8]);
        let l = kron_product(&l1, &l2);
        let inv = spd_inverse(&(&l + Matrix::identity(4, 4))).unwrap();
        let theta = ThetaAccumulator::from_dense(inv, 1).unwrap();
        let (m1, m2) = joint_picard_update(&l1, &l2, &theta, 1.0).unwrap();
        assert!(relative_frobenius(&kron_product(&m1, &m2), &l) < 1e-10);
        assert!((m1.norm() - m2.norm()).abs() / m1.norm() < 1e-12);
    }

    #[test]
    fn rejects_stochastic_mode() {
        let k = KronKernel::pair(SpdMatrix::identity(2), SpdMatrix::identity(2));
        let t = TrainingSet::from_lists(4, vec![vec![0]]).unwrap();
        let cfg = FitConfig {
            mode: FitMode::Stochastic,
            ..FitConfig::default()
        };
        assert!(fit_joint(&k, &t, &cfg).is_err());
    }
}
