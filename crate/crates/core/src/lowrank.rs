//! Pivoted incomplete Cholesky and the subset-refit sparsification baseline.
//!
//! The baseline uses only the input Gram matrix: greedy pivots pick a subset
//! of training points, and the embedding is refit on that subset with the
//! usual ridge estimator. The resulting coefficients are embedded back into an
//! `n x n` matrix supported on the pivot rows and columns, so they can be
//! scored exactly like a Lasso solution.

use ndarray::{s, Array2, Axis};

use crate::embedding::{fit, EmbeddingModel, TrainingSet};
use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, KernelSpec};
use crate::par;
use crate::sparse::{kl_distance, nnz_fraction, row_occupancy, Penalty, SparseProblem};

/// Residual diagonal entries down to this negative value are treated as round-off.
const NEG_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct IncompleteCholesky {
    /// Selected indices, in selection order.
    pub pivots: Vec<usize>,
    /// `n x rank`; `factor * factor^T` approximates `K`.
    pub factor: Array2<f64>,
    /// Diagonal of `K - factor * factor^T` after the last step.
    pub residual_diag: Vec<f64>,
    /// Largest residual diagonal entry before each step, plus the final one.
    pub step_max_residual: Vec<f64>,
}

impl IncompleteCholesky {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// `tr(K - factor * factor^T)`.
    pub fn residual_trace(&self) -> f64 {
        self.residual_diag.iter().sum()
    }

    pub fn reconstruction(&self) -> Array2<f64> {
        self.factor.dot(&self.factor.t())
    }
}

/// Greedy max-residual-diagonal pivoted Cholesky of a symmetric PSD matrix.
///
/// Stops after `max_rank` pivots or once the largest residual diagonal is
/// `<= tol`. Ties go to the lowest index.
pub fn incomplete_cholesky(k: &GramMatrix, max_rank: usize, tol: f64) -> Result<IncompleteCholesky> {
    let a = k.entries();
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::input("incomplete_cholesky needs a nonempty square matrix"));
    }
    if max_rank == 0 || max_rank > n {
        return Err(Error::input(format!("max_rank must lie in 1..={n}, got {max_rank}")));
    }
    if !(tol >= 0.0) {
        return Err(Error::input("tol must be nonnegative"));
    }

    let mut diag: Vec<f64> = a.diag().to_vec();
    let mut factor = Array2::<f64>::zeros((n, max_rank));
    let mut pivots = Vec::with_capacity(max_rank);
    let mut history = Vec::with_capacity(max_rank + 1);

    loop {
        for (i, d) in diag.iter_mut().enumerate() {
            if *d < -NEG_RESIDUAL_TOL {
                return Err(Error::Numerical(format!(
                    "residual diagonal {i} is {d:e} after {} pivots: matrix is not PSD",
                    pivots.len()
                )));
            }
            *d = d.max(0.0);
        }
        let (j, dmax) = diag.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        );
        history.push(dmax);
        let k_step = pivots.len();
        if k_step == max_rank || dmax <= tol || dmax <= 0.0 {
            break;
        }

        let pivot_val = dmax.sqrt();
        let gj = factor.slice(s![j, ..k_step]).to_owned();
        for i in 0..n {
            let v = if i == j {
                pivot_val
            } else {
                let dot = factor.slice(s![i, ..k_step]).dot(&gj);
                (a[[i, j]] - dot) / pivot_val
            };
            factor[[i, k_step]] = v;
        }
        for i in 0..n {
            let g = factor[[i, k_step]];
            diag[i] -= g * g;
        }
        diag[j] = 0.0;
        pivots.push(j);
    }

    let rank = pivots.len();
    Ok(IncompleteCholesky {
        factor: factor.slice(s![.., ..rank]).to_owned(),
        pivots,
        residual_diag: diag,
        step_max_residual: history,
    })
}

/// Refit the ridge estimator on the pivot subset and scatter its coefficients
/// into an `n x n` matrix supported on `pivots x pivots`.
///
/// The subset estimator uses its own size `m` in the ridge shift, i.e.
/// `(K_PP + lambda m I)^{-1}`; with every index selected this is exactly `W`.
pub fn subset_refit(
    train: &TrainingSet,
    pivots: &[usize],
    kspec: KernelSpec,
    lspec: KernelSpec,
    lambda: f64,
) -> Result<Array2<f64>> {
    if pivots.is_empty() {
        return Err(Error::input("subset_refit needs at least one pivot"));
    }
    let mut seen = vec![false; train.len()];
    for &p in pivots {
        if p >= train.len() {
            return Err(Error::input(format!(
                "pivot {p} out of range for {} samples",
                train.len()
            )));
        }
        if std::mem::replace(&mut seen[p], true) {
            return Err(Error::input(format!("pivot {p} repeated")));
        }
    }
    let sub = train.subset(pivots)?;
    let model = fit(&sub, kspec, lspec, lambda)?;
    let n = train.len();
    let mut out = Array2::zeros((n, n));
    let w = model.coefficients();
    for (a, &pa) in pivots.iter().enumerate() {
        for (b, &pb) in pivots.iter().enumerate() {
            out[[pa, pb]] = w[[a, b]];
        }
    }
    Ok(out)
}

/// One rank of a Cholesky-baseline sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyRow {
    pub rank: usize,
    pub nnz_fraction: f64,
    pub row_occupancy: f64,
    pub kl_distance: f64,
    pub test_risk: f64,
}

/// Score the subset-refit baseline at each rank, using nested prefixes of a
/// single pivot sequence on the model's input Gram matrix.
pub fn cholesky_sweep(model: &EmbeddingModel, test: &TrainingSet, ranks: &[usize]) -> Result<Vec<CholeskyRow>> {
    let n = model.n();
    if ranks.is_empty() {
        return Err(Error::input("rank grid is empty"));
    }
    if let Some(&bad) = ranks.iter().find(|&&r| r == 0 || r > n) {
        return Err(Error::input(format!("rank {bad} outside 1..={n}")));
    }
    let max_rank = *ranks.iter().max().expect("nonempty");
    let ic = incomplete_cholesky(model.kgram(), max_rank, 0.0)?;
    let problem = SparseProblem::from_model(model, 0.0, Penalty::EntrywiseL1)?;
    par::try_map(ranks, |&rank| {
        let run = || -> Result<CholeskyRow> {
            // a numerically exhausted factorization stops early; use what it found
            let pivots = &ic.pivots[..rank.min(ic.rank())];
            let m = subset_refit(model.train(), pivots, *model.kspec(), *model.lspec(), model.lambda())?;
            Ok(CholeskyRow {
                rank,
                nnz_fraction: nnz_fraction(&m),
                row_occupancy: row_occupancy(&m),
                kl_distance: kl_distance(&problem, &m)?,
                test_risk: model.with_coefficients(m)?.empirical_risk(test)?,
            })
        };
        run().map_err(|e| e.context(format!("cholesky rank {rank}")))
    })
}

/// Rows of `m` that contain a nonzero entry.
pub fn support_rows(m: &Array2<f64>) -> Vec<usize> {
    m.axis_iter(Axis(0))
        .enumerate()
        .filter(|(_, r)| r.iter().any(|&v| v != 0.0))
        .map(|(i, _)| i)
        .collect()
}
