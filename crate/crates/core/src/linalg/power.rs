use super::{Matrix, Vector};
use crate::{Error, Result};

pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_POWER_MAX_ITER: usize = 1000;

/// Leading singular triple `R v = σ u`, `Rᵀ u ≈ σ v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriple {
    pub u: Vector,
    pub sigma: f64,
    pub v: Vector,
    pub iterations: usize,
}

/// Power iteration on `RᵀR` for the leading singular pair.
///
/// Starts from the normalized all-ones right vector. Stops once
/// `‖Rᵀu − σv‖ ≤ tol·σ`; by construction `Rv = σu` holds exactly at exit.
/// The sign is fixed so that the first nonzero coordinate of `u` is positive.
pub fn leading_singular_pair(r: &Matrix, tol: f64, max_iter: usize) -> Result<SingularTriple> {
    if r.nrows() == 0 || r.ncols() == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    if r.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidArgument(
            "leading singular pair of the zero matrix".into(),
        ));
    }
    let cols = r.ncols();
    let mut v = Vector::from_element(cols, 1.0 / (cols as f64).sqrt());
    let rt = r.transpose();

    for it in 1..=max_iter {
        let mut u = r * &v;
        let mut sigma = u.norm();
        if sigma == 0.0 {
            // Start vector in the null space; restart from a basis vector
            // that is not.
            let j = (0..cols)
                .max_by(|&a, &b| r.column(a).norm().total_cmp(&r.column(b).norm()))
                .unwrap_or(0);
            v = Vector::zeros(cols);
            v[j] = 1.0;
            continue;
        }
        u /= sigma;
        let w = &rt * &u;
        let residual = (&w - &v * sigma).norm();
        if residual <= tol * sigma {
            let flip = u.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0);
            if flip {
                u = -u;
                v = -v;
            }
            sigma = sigma.abs();
            return Ok(SingularTriple {
                u,
                sigma,
                v,
                iterations: it,
            });
        }
        let wn = w.norm();
        v = w / wn;
    }
    Err(Error::NoConvergence {
        what: "power method",
        iterations: max_iter,
    })
}
