//! Conditional mean embeddings as vector-valued ridge regression.
//!
//! - [`kernels`]: scalar kernels and Gram matrices.
//! - [`linalg`]: Cholesky solves, power iteration, soft thresholding.
//! - [`embedding`]: the ridge estimator `W = (K + lambda n I)^{-1}`, its
//!   surrogate risk, and cross-validation.
//! - [`sparse`]: FISTA for the matrix Lasso that sparsifies `W` under the
//!   `K (x) L` norm, with entrywise and row/column group penalties.
//! - [`lowrank`]: pivoted incomplete Cholesky and the subset-refit baseline.
//! - [`ratecheck`]: exact finite-alphabet risk oracles and convergence-rate runs.
//! - [`pendulum`]: swing-up environment and embedding-based value iteration.
//! - [`cli`]: the `cme` command-line driver.
//!
//! Batch work (cross-validation folds, sparsity sweeps, rate seeds, policy
//! rollouts) runs on rayon when the `parallel` feature is on (the default) and
//! sequentially otherwise; results are identical either way.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod embedding;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod lowrank;
pub mod par;
pub mod pendulum;
pub mod ratecheck;
pub mod sparse;

pub use embedding::{cross_validate, fit, CvReport, EmbeddingModel, GridPoint, TrainingSet};
pub use error::{Error, Result};
pub use kernels::{cross_gram, eval_kernel, gram, GramMatrix, KernelKind, KernelSpec};
pub use sparse::{fista_solve, FistaOptions, Penalty, SparseProblem, SparseSolution};
