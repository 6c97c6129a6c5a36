//! Determinantal point processes with Kronecker-structured kernels.
//!
//! The DPP kernel is `L = L_1 ⊗ … ⊗ L_m` with small positive-definite
//! factors. The structure makes the normalizer `det(I + L)` and the
//! eigendecomposition of `L` cheap, which gives:
//!
//! | Task | Entry point |
//! |------|-------------|
//! | Exact sampling | [`sampling::KronSampler`], [`sampling::sample_kron`] |
//! | Log-likelihood and gradient | [`model::log_likelihood`], [`model::grad_delta`] |
//! | KrK-Picard learning (batch/stochastic) | [`learning::fit_krk`] |
//! | Joint-Picard learning | [`learning::fit_joint`] |
//! | Dense Picard baseline | [`learning::fit_picard`] |
//! | Training-set partitioning | [`partition::greedy_partition`] |
//!
//! Indexing is zero-based throughout. A joint index over factors of sizes
//! `(N_1, …, N_m)` is row-major, so for two factors `i = i_1 * N_2 + i_2`;
//! this is the layout produced by [`linalg::kron_product`].

pub mod learning;
pub mod linalg;
pub mod model;
pub mod partition;
pub mod sampling;

mod error;

pub use error::{Error, Result};
pub use linalg::{EigenSystem, KronEigenSystem, Matrix, SpdMatrix};
pub use model::{Kernel, KronKernel, Subset, TrainingSet};
