//! KrK-Picard: block-coordinate fixed-point updates of `L = L_1 ⊗ L_2`.
//!
//! With `Δ = Θ − (I + L)⁻¹` the updates are
//!
//! ```text
//! L_1 ← L_1 + (a/N_2) Tr_1((I ⊗ L_2⁻¹)(LΔL))
//! L_2 ← L_2 + (a/N_1) Tr_2((L_1⁻¹ ⊗ I)(LΔL))
//! ```
//!
//! and neither `LΔL` nor `(I + L)⁻¹` is ever formed. The `Θ` part reduces
//! to block traces (`A` terms), the `(I + L)⁻¹` part to diagonal algebra in
//! the factor eigenbases (`B` terms).

use std::time::{Duration, Instant};

use super::theta::{batch_pass, sparse_accumulate, ThetaAccumulator, ThetaStorage};
use super::{
    check_pd, guarded_step, FitConfig, FitHistory, FitMode, IterationRecord, MinibatchSchedule,
    DEFAULT_PD_FLOOR,
};
use crate::linalg::{sym_eig, symmetrize, EigenSystem, Matrix, SpdMatrix};
use crate::model::{mean_subset_log_det, KronKernel, Subset, TrainingSet};
use crate::{Error, Result};

fn check_theta(theta: &ThetaAccumulator, n1: usize, n2: usize) -> Result<()> {
    if theta.ground_size() != n1 * n2 {
        return Err(Error::DimensionMismatch(format!(
            "theta over {} items, factors give {}",
            theta.ground_size(),
            n1 * n2
        )));
    }
    Ok(())
}

/// `A[k, l] = Tr(Θ_(kl) L_2)`, an `N_1 × N_1` matrix.
fn block_traces(theta: &ThetaAccumulator, l2: &Matrix, n1: usize, n2: usize) -> Matrix {
    let mut out = Matrix::zeros(n1, n1);
    match theta.storage() {
        ThetaStorage::Dense(th) => {
            for l in 0..n1 {
                for b in 0..n2 {
                    let col = th.column(l * n2 + b);
                    for k in 0..n1 {
                        let mut acc = 0.0;
                        for a in 0..n2 {
                            acc += col[k * n2 + a] * l2[(b, a)];
                        }
                        out[(k, l)] += acc;
                    }
                }
            }
        }
        ThetaStorage::Sparse { support, values } => {
            for (t, &q) in support.iter().enumerate() {
                let (l, b) = (q / n2, q % n2);
                for (s, &p) in support.iter().enumerate() {
                    let (k, a) = (p / n2, p % n2);
                    out[(k, l)] += values[(s, t)] * l2[(b, a)];
                }
            }
        }
    }
    out
}

/// `Σ_{i,j} L_1[i, j] Θ_(ij)`, an `N_2 × N_2` matrix.
fn weighted_block_sum(theta: &ThetaAccumulator, l1: &Matrix, n1: usize, n2: usize) -> Matrix {
    let mut out = Matrix::zeros(n2, n2);
    match theta.storage() {
        ThetaStorage::Dense(th) => {
            for j in 0..n1 {
                for b in 0..n2 {
                    let col = th.column(j * n2 + b);
                    for i in 0..n1 {
                        let w = l1[(i, j)];
                        for a in 0..n2 {
                            out[(a, b)] += w * col[i * n2 + a];
                        }
                    }
                }
            }
        }
        ThetaStorage::Sparse { support, values } => {
            for (t, &q) in support.iter().enumerate() {
                let (j, b) = (q / n2, q % n2);
                for (s, &p) in support.iter().enumerate() {
                    let (i, a) = (p / n2, p % n2);
                    out[(a, b)] += l1[(i, j)] * values[(s, t)];
                }
            }
        }
    }
    out
}

/// `P diag(w) Pᵀ`.
fn eigen_scaled(p: &Matrix, w: &[f64]) -> Matrix {
    let mut scaled = p.clone();
    for (mut col, &x) in scaled.column_iter_mut().zip(w) {
        col *= x;
    }
    scaled * p.transpose()
}

pub(crate) fn update_factor1_with(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    e1: &EigenSystem,
    e2: &EigenSystem,
    theta: &ThetaAccumulator,
    a: f64,
) -> Result<Matrix> {
    let (n1, n2) = (l1.dim(), l2.dim());
    check_theta(theta, n1, n2)?;
    let a_term = block_traces(theta, l2, n1, n2);
    let l1m = l1.as_matrix();
    let la_l = l1m * a_term * l1m;
    // L_1 B L_1 = P_1 D_1 D̂ D_1 P_1ᵀ with D̂_kk = Σ_j d2_j / (1 + d1_k d2_j).
    let w: Vec<f64> = e1
        .values
        .iter()
        .map(|&d1| {
            let alpha: f64 = e2.values.iter().map(|&d2| d2 / (1.0 + d1 * d2)).sum();
            d1 * d1 * alpha
        })
        .collect();
    let lb_l = eigen_scaled(&e1.vectors, &w);
    let raw = l1m + (la_l - lb_l) * (a / n2 as f64);
    Ok(symmetrize(&raw))
}

pub(crate) fn update_factor2_with(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    e1: &EigenSystem,
    e2: &EigenSystem,
    theta: &ThetaAccumulator,
    a: f64,
) -> Result<Matrix> {
    let (n1, n2) = (l1.dim(), l2.dim());
    check_theta(theta, n1, n2)?;
    let l2m = l2.as_matrix();
    let a_term = l2m * weighted_block_sum(theta, l1, n1, n2) * l2m;
    // B = P_2 (Σ_{i,k} P_1[i,k]² Λ_(kk)) P_2ᵀ,
    // Λ_(kk) = diag_j(d2_j · d1_k d2_j / (1 + d1_k d2_j)).
    let col_weights: Vec<f64> = e1
        .vectors
        .column_iter()
        .map(|c| c.iter().map(|x| x * x).sum())
        .collect();
    let w: Vec<f64> = e2
        .values
        .iter()
        .map(|&d2| {
            e1.values
                .iter()
                .zip(&col_weights)
                .map(|(&d1, &cw)| cw * d2 * d1 * d2 / (1.0 + d1 * d2))
                .sum()
        })
        .collect();
    let b_term = eigen_scaled(&e2.vectors, &w);
    let raw = l2m + (a_term - b_term) * (a / n1 as f64);
    Ok(symmetrize(&raw))
}

/// Unchecked `L_1` update; `theta` may be dense or sparse.
pub fn krk_update_factor1(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    theta: &ThetaAccumulator,
    a: f64,
) -> Result<Matrix> {
    update_factor1_with(l1, l2, &sym_eig(l1)?, &sym_eig(l2)?, theta, a)
}

/// Unchecked `L_2` update; `theta` may be dense or sparse.
pub fn krk_update_factor2(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    theta: &ThetaAccumulator,
    a: f64,
) -> Result<Matrix> {
    update_factor2_with(l1, l2, &sym_eig(l1)?, &sym_eig(l2)?, theta, a)
}

/// [`krk_update_factor1`] followed by [`check_pd`] at the default floor.
pub fn krk_step_factor1(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    theta: &ThetaAccumulator,
    a: f64,
) -> Result<SpdMatrix> {
    check_pd(&krk_update_factor1(l1, l2, theta, a)?, DEFAULT_PD_FLOOR)
}

/// [`krk_update_factor2`] followed by [`check_pd`] at the default floor.
pub fn krk_step_factor2(
    l1: &SpdMatrix,
    l2: &SpdMatrix,
    theta: &ThetaAccumulator,
    a: f64,
) -> Result<SpdMatrix> {
    check_pd(&krk_update_factor2(l1, l2, theta, a)?, DEFAULT_PD_FLOOR)
}

fn pair_log_det_norm(e1: &EigenSystem, e2: &EigenSystem) -> f64 {
    e1.values
        .iter()
        .map(|&d1| e2.values.iter().map(|&d2| (d1 * d2).ln_1p()).sum::<f64>())
        .sum()
}

/// KrK-Picard iteration.
///
/// Each outer iteration updates `L_1` then `L_2`. In batch mode `Θ` is
/// recomputed from the full training set after every factor change; in
/// stochastic mode one minibatch is drawn per iteration and its sparse `Θ`
/// is recomputed between the two factor updates. Batch mode stops early on
/// the relative-change threshold; stochastic mode runs `max_iter` iterations.
pub fn fit_krk(
    k0: &KronKernel,
    t: &TrainingSet,
    cfg: &FitConfig,
) -> Result<(KronKernel, FitHistory)> {
    cfg.validate()?;
    let [l1, l2] = k0.factors() else {
        return Err(Error::InvalidArgument(format!(
            "KrK-Picard learns two factors, kernel has {}",
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
    match cfg.mode {
        FitMode::Batch => fit_batch(l1.clone(), l2.clone(), t, cfg),
        FitMode::Stochastic => fit_stochastic(l1.clone(), l2.clone(), t, cfg),
    }
}

fn fit_batch(
    mut l1: SpdMatrix,
    mut l2: SpdMatrix,
    t: &TrainingSet,
    cfg: &FitConfig,
) -> Result<(KronKernel, FitHistory)> {
    let mut e1 = sym_eig(&l1)?;
    let mut e2 = sym_eig(&l2)?;
    let (mut theta, mean_ld) = batch_pass(&KronKernel::pair(l1.clone(), l2.clone()), t)?;
    let mut phi = mean_ld - pair_log_det_norm(&e1, &e2);
    let mut history = FitHistory {
        initial_loglik: phi,
        ..FitHistory::default()
    };
    let mut elapsed = Duration::ZERO;

    for it in 1..=cfg.max_iter {
        let start = Instant::now();
        l1 = guarded_step(
            |a| update_factor1_with(&l1, &l2, &e1, &e2, &theta, a),
            cfg.step_size,
            cfg.pd_floor,
            it,
            "L1",
        )?;
        e1 = sym_eig(&l1)?;
        theta = batch_pass(&KronKernel::pair(l1.clone(), l2.clone()), t)?.0;
        l2 = guarded_step(
            |a| update_factor2_with(&l1, &l2, &e1, &e2, &theta, a),
            cfg.step_size,
            cfg.pd_floor,
            it,
            "L2",
        )?;
        e2 = sym_eig(&l2)?;
        let (next_theta, mean_ld) = batch_pass(&KronKernel::pair(l1.clone(), l2.clone()), t)?;
        theta = next_theta;
        let next_phi = mean_ld - pair_log_det_norm(&e1, &e2);
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

fn fit_stochastic(
    mut l1: SpdMatrix,
    mut l2: SpdMatrix,
    t: &TrainingSet,
    cfg: &FitConfig,
) -> Result<(KronKernel, FitHistory)> {
    let mut e1 = sym_eig(&l1)?;
    let mut e2 = sym_eig(&l2)?;
    let objective = |l1: &SpdMatrix, l2: &SpdMatrix, e1: &EigenSystem, e2: &EigenSystem| {
        let k = KronKernel::pair(l1.clone(), l2.clone());
        mean_subset_log_det(&k, t).map(|ld| ld - pair_log_det_norm(e1, e2))
    };
    let mut history = FitHistory {
        initial_loglik: objective(&l1, &l2, &e1, &e2)?,
        ..FitHistory::default()
    };
    let mut schedule = MinibatchSchedule::new(t.len(), cfg.minibatch_size, cfg.seed);
    let mut elapsed = Duration::ZERO;

    for it in 1..=cfg.max_iter {
        let start = Instant::now();
        let labels = schedule.next_batch().to_vec();
        let batch: Vec<&Subset> = labels.iter().map(|&i| &t.subsets()[i]).collect();
        let scale = 1.0 / batch.len() as f64;

        let theta = sparse_accumulate(&KronKernel::pair(l1.clone(), l2.clone()), &batch, &labels, scale)?;
        l1 = guarded_step(
            |a| update_factor1_with(&l1, &l2, &e1, &e2, &theta, a),
            cfg.step_size,
            cfg.pd_floor,
            it,
            "L1",
        )?;
        e1 = sym_eig(&l1)?;
        let theta = sparse_accumulate(&KronKernel::pair(l1.clone(), l2.clone()), &batch, &labels, scale)?;
        l2 = guarded_step(
            |a| update_factor2_with(&l1, &l2, &e1, &e2, &theta, a),
            cfg.step_size,
            cfg.pd_floor,
            it,
            "L2",
        )?;
        e2 = sym_eig(&l2)?;
        elapsed += start.elapsed();

        history.records.push(IterationRecord {
            iteration: it,
            seconds: elapsed.as_secs_f64(),
            loglik: objective(&l1, &l2, &e1, &e2)?,
            min_eigenvalue: Some(e1.min_value().min(e2.min_value())),
        });
    }
    Ok((KronKernel::pair(l1, l2), history))
}
