//! Dense Picard baseline `L ← L + aLΔL`.

use std::time::{Duration, Instant};

use super::theta::{batch_pass, sparse_accumulate};
use super::{check_pd, guarded_step, FitConfig, FitHistory, FitMode, IterationRecord, MinibatchSchedule, DEFAULT_PD_FLOOR};
use crate::linalg::{
    cholesky_lower, log_det_from_cholesky, lower_triangular_inverse, symmetrize, Matrix, SpdMatrix,
};
use crate::model::{mean_subset_log_det, Subset, TrainingSet};
use crate::{Error, Result};

/// `(I + L)⁻¹` and `log det(I + L)` from one factorization.
fn shifted_inverse(l: &Matrix) -> Result<(Matrix, f64)> {
    let mut ipl = l.clone();
    for i in 0..ipl.nrows() {
        ipl[(i, i)] += 1.0;
    }
    let c = cholesky_lower(&ipl).ok_or_else(|| Error::Numerical("I + L is not positive definite".into()))?;
    let ci = lower_triangular_inverse(&c);
    Ok((symmetrize(&(ci.transpose() * &ci)), log_det_from_cholesky(&c)))
}

/// `LΔL` for `Δ = Θ − (I + L)⁻¹`.
fn l_delta_l(l: &Matrix, theta: &Matrix, inv: &Matrix) -> Matrix {
    let delta = theta - inv;
    let ld = l * delta;
    symmetrize(&(ld * l))
}

fn check_sizes(l: &SpdMatrix, t: &TrainingSet) -> Result<()> {
    if l.dim() != t.ground_size() {
        return Err(Error::DimensionMismatch(format!(
            "kernel over {} items, training set over {}",
            l.dim(),
            t.ground_size()
        )));
    }
    if t.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    Ok(())
}

/// Unchecked `L + aLΔL`, symmetrized.
pub fn picard_update(l: &SpdMatrix, t: &TrainingSet, a: f64) -> Result<Matrix> {
    check_sizes(l, t)?;
    let (theta, _) = batch_pass(l, t)?;
    let theta = theta.densify();
    let (inv, _) = shifted_inverse(l)?;
    let step = l_delta_l(l, &theta, &inv);
    Ok(symmetrize(&(l.as_matrix() + step * a)))
}

/// [`picard_update`] followed by [`check_pd`] at the default floor.
pub fn picard_step(l: &SpdMatrix, t: &TrainingSet, a: f64) -> Result<SpdMatrix> {
    check_pd(&picard_update(l, t, a)?, DEFAULT_PD_FLOOR)
}

/// Picard iteration with the same stopping rules as [`super::fit_krk`].
pub fn fit_picard(
    l0: &SpdMatrix,
    t: &TrainingSet,
    cfg: &FitConfig,
) -> Result<(SpdMatrix, FitHistory)> {
    cfg.validate()?;
    check_sizes(l0, t)?;
    let mut l = l0.clone();
    let mut history = FitHistory::default();
    let mut elapsed = Duration::ZERO;

    match cfg.mode {
        FitMode::Batch => {
            let (theta, mean_ld) = batch_pass(&l, t)?;
            let mut theta = theta.densify();
            let (mut inv, log_norm) = shifted_inverse(&l)?;
            let mut phi = mean_ld - log_norm;
            history.initial_loglik = phi;
            for it in 1..=cfg.max_iter {
                let start = Instant::now();
                let step = l_delta_l(&l, &theta, &inv);
                l = guarded_step(
                    |a| Ok(l.as_matrix() + &step * a),
                    cfg.step_size,
                    cfg.pd_floor,
                    it,
                    "L",
                )?;
                let (next_theta, mean_ld) = batch_pass(&l, t)?;
                theta = next_theta.densify();
                let (next_inv, log_norm) = shifted_inverse(&l)?;
                inv = next_inv;
                let next_phi = mean_ld - log_norm;
                elapsed += start.elapsed();
                history.records.push(IterationRecord {
                    iteration: it,
                    seconds: elapsed.as_secs_f64(),
                    loglik: next_phi,
                    min_eigenvalue: None,
                });
                if history.relative_change_below(phi, next_phi, cfg.tol) {
                    history.converged = true;
                    break;
                }
                phi = next_phi;
            }
        }
        FitMode::Stochastic => {
            let objective = |l: &SpdMatrix, log_norm: f64| mean_subset_log_det(l, t).map(|ld| ld - log_norm);
            let (mut inv, log_norm) = shifted_inverse(&l)?;
            history.initial_loglik = objective(&l, log_norm)?;
            let mut schedule = MinibatchSchedule::new(t.len(), cfg.minibatch_size, cfg.seed);
            for it in 1..=cfg.max_iter {
                let start = Instant::now();
                let labels = schedule.next_batch().to_vec();
                let batch: Vec<&Subset> = labels.iter().map(|&i| &t.subsets()[i]).collect();
                let theta = sparse_accumulate(&l, &batch, &labels, 1.0 / batch.len() as f64)?.densify();
                let step = l_delta_l(&l, &theta, &inv);
                l = guarded_step(
                    |a| Ok(l.as_matrix() + &step * a),
                    cfg.step_size,
                    cfg.pd_floor,
                    it,
                    "L",
                )?;
                let (next_inv, log_norm) = shifted_inverse(&l)?;
                inv = next_inv;
                elapsed += start.elapsed();
                history.records.push(IterationRecord {
                    iteration: it,
                    seconds: elapsed.as_secs_f64(),
                    loglik: objective(&l, log_norm)?,
                    min_eigenvalue: None,
                });
            }
        }
    }
    Ok((l, history))
}
