//! Sparse approximation of an embedding's coefficient matrix.
//!
//! Given Gram matrices `K`, `L` and the dense coefficients `W`, find `M`
//! minimizing
//!
//! ```text
//! tr((M - W)^T K (M - W) L) + gamma * penalty(M)
//! ```
//!
//! The smooth term is `f(M - W)^2`, the squared `K (x) L` norm of the
//! difference between the sparse and dense embeddings. It is solved with
//! FISTA: step `1 / Lip` where `Lip = 2 lambda_max(K) lambda_max(L)`,
//! shrinkage threshold `gamma / Lip`, Nesterov momentum from `Z = Q = 0`.
//!
//! The gradient of the smooth term is `2 K (M - W) L`, so at `gamma = 0` the
//! unique fixed point (for positive definite `K`, `L`) is `M = W`.

use ndarray::{Array2, Axis};

use crate::embedding::{EmbeddingModel, TrainingSet};
use crate::error::{Error, Result};
use crate::linalg::{frobenius, frobenius_inner, soft_threshold, sym_eig_max};
use crate::par;

/// Entries below this magnitude count as zero in sparsity statistics.
pub const NNZ_THRESHOLD: f64 = 1e-12;

pub const DEFAULT_MAX_ITER: usize = 20_000;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Sparsity-inducing penalty on the coefficient matrix (rows index inputs `x_i`,
/// columns index outputs `y_j`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    /// `sum_ij |M_ij|`.
    EntrywiseL1,
    /// Sum of row 2-norms; drops whole input points.
    RowGroup,
    /// Sum of column 2-norms; drops whole output points.
    ColGroup,
}

impl Penalty {
    pub fn value(&self, m: &Array2<f64>) -> f64 {
        match self {
            Penalty::EntrywiseL1 => m.iter().map(|v| v.abs()).sum(),
            Penalty::RowGroup => m.outer_iter().map(|r| r.dot(&r).sqrt()).sum(),
            Penalty::ColGroup => m.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).sum(),
        }
    }

    /// Dual norm: the smallest `gamma` for which `M = 0` is optimal when the
    /// gradient at zero is `g`.
    fn dual_norm(&self, g: &Array2<f64>) -> f64 {
        match self {
            Penalty::EntrywiseL1 => g.iter().fold(0.0, |a, v| a.max(v.abs())),
            Penalty::RowGroup => g.outer_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max),
            Penalty::ColGroup => g.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).fold(0.0, f64::max),
        }
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entrywise_l1" | "l1" => Ok(Penalty::EntrywiseL1),
            "row_group" => Ok(Penalty::RowGroup),
            "col_group" => Ok(Penalty::ColGroup),
            other => Err(Error::input(format!("unknown penalty '{other}'"))),
        }
    }
}

/// Proximal operator of `t * penalty`.
pub fn prox(penalty: Penalty, v: &Array2<f64>, t: f64) -> Array2<f64> {
    if t == 0.0 {
        return v.clone();
    }
    match penalty {
        Penalty::EntrywiseL1 => v.mapv(|z| soft_threshold(z, t)),
        Penalty::RowGroup => {
            let mut out = v.clone();
            for mut r in out.outer_iter_mut() {
                let norm = r.dot(&r).sqrt();
                let scale = if norm > t { 1.0 - t / norm } else { 0.0 };
                r.mapv_inplace(|x| x * scale);
            }
            out
        }
        Penalty::ColGroup => {
            let mut out = v.clone();
            for mut c in out.axis_iter_mut(Axis(1)) {
                let norm = c.dot(&c).sqrt();
                let scale = if norm > t { 1.0 - t / norm } else { 0.0 };
                c.mapv_inplace(|x| x * scale);
            }
            out
        }
    }
}

/// A matrix-Lasso instance.
#[derive(Debug, Clone)]
pub struct SparseProblem {
    k: Array2<f64>,
    l: Array2<f64>,
    w: Array2<f64>,
    gamma: f64,
    penalty: Penalty,
    lipschitz: f64,
}

impl SparseProblem {
    pub fn new(k: Array2<f64>, l: Array2<f64>, w: Array2<f64>, gamma: f64, penalty: Penalty) -> Result<Self> {
        let n = w.nrows();
        if n == 0 || w.dim() != (n, n) || k.dim() != (n, n) || l.dim() != (n, n) {
            return Err(Error::input(format!(
                "K {:?}, L {:?} and W {:?} must all be the same square shape",
                k.dim(),
                l.dim(),
                w.dim()
            )));
        }
        if k.iter().chain(l.iter()).chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("sparse problem has non-finite entries"));
        }
        check_gamma(gamma)?;
        let lipschitz = 2.0 * sym_eig_max(k.view(), 1e-12)? * sym_eig_max(l.view(), 1e-12)?;
        Ok(Self {
            k,
            l,
            w,
            gamma,
            penalty,
            lipschitz,
        })
    }

    /// Instance approximating the coefficients of `model`.
    pub fn from_model(model: &EmbeddingModel, gamma: f64, penalty: Penalty) -> Result<Self> {
        Self::new(
            model.kgram().entries().clone(),
            model.lgram().entries().clone(),
            model.coefficients().clone(),
            gamma,
            penalty,
        )
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { gamma, ..self.clone() })
    }

    pub fn with_penalty(&self, penalty: Penalty) -> Self {
        Self {
            penalty,
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn penalty(&self) -> Penalty {
        self.penalty
    }

    pub fn k(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn l(&self) -> &Array2<f64> {
        &self.l
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    /// `2 lambda_max(K) lambda_max(L)`, the Lipschitz constant of the smooth gradient.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Smallest `gamma` at which `M = 0` solves the problem.
    pub fn gamma_max(&self) -> f64 {
        let kwl = self.k.dot(&self.w).dot(&self.l);
        2.0 * self.penalty.dual_norm(&kwl)
    }

    fn check_shape(&self, m: &Array2<f64>) -> Result<()> {
        if m.dim() != self.w.dim() {
            return Err(Error::input(format!(
                "matrix is {:?}, problem is {:?}",
                m.dim(),
                self.w.dim()
            )));
        }
        Ok(())
    }

    /// `K D L` for `D = M - W`.
    fn residual_product(&self, m: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let d = m - &self.w;
        let r = self.k.dot(&d).dot(&self.l);
        (d, r)
    }

    /// `tr((M - W)^T K (M - W) L)`, clamped at zero.
    pub fn smooth(&self, m: &Array2<f64>) -> Result<f64> {
        self.check_shape(m)?;
        let (d, r) = self.residual_product(m);
        Ok(frobenius_inner(&d, &r).max(0.0))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::input(format!(
            "gamma must be nonnegative and finite, got {gamma}"
        )));
    }
    Ok(())
}

/// Smooth term plus `gamma` times the penalty.
pub fn lasso_objective(problem: &SparseProblem, m: &Array2<f64>) -> Result<f64> {
    Ok(problem.smooth(m)? + problem.gamma * problem.penalty.value(m))
}

/// `2 K (M - W) L`.
pub fn grad_smooth(problem: &SparseProblem, m: &Array2<f64>) -> Result<Array2<f64>> {
    problem.check_shape(m)?;
    Ok(problem.residual_product(m).1 * 2.0)
}

/// `f(M - W)`: the `K (x) L` distance between the embeddings with coefficients `M` and `W`.
pub fn kl_distance(problem: &SparseProblem, m: &Array2<f64>) -> Result<f64> {
    Ok(problem.smooth(m)?.sqrt())
}

/// Fraction of entries with magnitude above [`NNZ_THRESHOLD`].
pub fn nnz_fraction(m: &Array2<f64>) -> f64 {
    m.iter().filter(|v| v.abs() > NNZ_THRESHOLD).count() as f64 / m.len() as f64
}

/// Fraction of rows (input points) with at least one nonzero entry.
pub fn row_occupancy(m: &Array2<f64>) -> f64 {
    let used = m
        .outer_iter()
        .filter(|r| r.iter().any(|v| v.abs() > NNZ_THRESHOLD))
        .count();
    used as f64 / m.nrows() as f64
}

#[derive(Debug, Clone)]
pub struct SparseSolution {
    pub m: Array2<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// `1 / Lip`.
    pub step: f64,
    pub nnz_fraction: f64,
    pub row_occupancy: f64,
    pub kl_distance: f64,
    /// False when `max_iter` was reached before the stopping rule fired.
    pub converged: bool,
}

/// Solver settings.
#[derive(Debug, Clone, Copy)]
pub struct FistaOptions {
    pub max_iter: usize,
    /// Stop once `|F_t - F_{t+1}| <= tol * |F_{t+1}|`.
    pub tol: f64,
    /// Reset momentum whenever the objective increases.
    pub restart: bool,
}

impl Default for FistaOptions {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            restart: true,
        }
    }
}

/// FISTA with the default (adaptive restart) settings.
pub fn fista_solve(problem: &SparseProblem, max_iter: usize, tol: f64) -> Result<SparseSolution> {
    fista_solve_with(
        problem,
        &FistaOptions {
            max_iter,
            tol,
            ..FistaOptions::default()
        },
    )
}

pub fn fista_solve_with(problem: &SparseProblem, opts: &FistaOptions) -> Result<SparseSolution> {
    if opts.max_iter == 0 {
        return Err(Error::input("max_iter must be at least 1"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::input("tol must be positive"));
    }
    let n = problem.n();
    let step = if problem.lipschitz > 0.0 {
        1.0 / problem.lipschitz
    } else {
        // K or L vanishes: the smooth term is identically zero
        let m = Array2::zeros((n, n));
        return finish(problem, m, 0, 0.0, true);
    };
    let threshold = problem.gamma * step;
    let penalty = problem.penalty;
    let objective_of = |d: &Array2<f64>, r: &Array2<f64>, z: &Array2<f64>| {
        frobenius_inner(d, r).max(0.0) + problem.gamma * penalty.value(z)
    };

    let mut z = Array2::<f64>::zeros((n, n));
    let (d0, mut r_z) = problem.residual_product(&z);
    let f0 = objective_of(&d0, &r_z, &z);
    let mut f_z = f0;
    // K (Q - W) L, maintained by linearity instead of recomputed
    let mut r_q = r_z.clone();
    let mut q = z.clone();
    let mut theta = 1.0f64;
    let floor = f64::EPSILON * f64::EPSILON * f0;

    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=opts.max_iter {
        iterations = t;
        let v = &q - &(&r_q * (2.0 * step));
        let z_new = prox(penalty, &v, threshold);
        let (d_new, r_new) = problem.residual_product(&z_new);
        let f_new = objective_of(&d_new, &r_new, &z_new);
        if !f_new.is_finite() {
            return Err(Error::Divergence { iteration: t });
        }

        let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        if opts.restart && f_new > f_z {
            theta = 1.0;
            q = z_new.clone();
            r_q = r_new.clone();
        } else {
            let beta = (theta - 1.0) / theta_new;
            q = &z_new + &((&z_new - &z) * beta);
            r_q = &r_new + &((&r_new - &r_z) * beta);
            theta = theta_new;
        }

        let change = (f_z - f_new).abs();
        let stalled = z_new == z;
        z = z_new;
        r_z = r_new;
        f_z = f_new;
        if change <= opts.tol * f_new.abs() || f_new <= floor || stalled {
            converged = true;
            break;
        }
    }
    finish(problem, z, iterations, step, converged)
}

fn finish(
    problem: &SparseProblem,
    m: Array2<f64>,
    iterations: usize,
    step: f64,
    converged: bool,
) -> Result<SparseSolution> {
    let objective = lasso_objective(problem, &m)?;
    let kl = kl_distance(problem, &m)?;
    Ok(SparseSolution {
        nnz_fraction: nnz_fraction(&m),
        row_occupancy: row_occupancy(&m),
        kl_distance: kl,
        objective,
        iterations,
        step,
        converged,
        m,
    })
}

/// One row of a sparsity sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub nnz_fraction: f64,
    pub row_occupancy: f64,
    pub kl_distance: f64,
    pub test_risk: f64,
    pub iterations: usize,
}

/// Solve the sparse problem for every `gamma` (ascending) and score each
/// solution on `test` through the embedding evaluation path.
pub fn sparsity_sweep(
    model: &EmbeddingModel,
    test: &TrainingSet,
    gammas: &[f64],
    penalty: Penalty,
    opts: &FistaOptions,
) -> Result<Vec<SweepRow>> {
    if gammas.is_empty() {
        return Err(Error::input("gamma grid is empty"));
    }
    if gammas.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::input("gammas must be sorted ascending"));
    }
    let base = SparseProblem::from_model(model, gammas[0], penalty)?;
    par::try_map(gammas, |&gamma| {
        let run = || -> Result<SweepRow> {
            let sol = fista_solve_with(&base.with_gamma(gamma)?, opts)?;
            let test_risk = model.with_coefficients(sol.m.clone())?.empirical_risk(test)?;
            Ok(SweepRow {
                gamma,
                nnz_fraction: sol.nnz_fraction,
                row_occupancy: sol.row_occupancy,
                kl_distance: sol.kl_distance,
                test_risk,
                iterations: sol.iterations,
            })
        };
        run().map_err(|e| e.context(format!("gamma = {gamma}")))
    })
}

/// Relative Frobenius distance helper used in diagnostics.
pub fn relative_gap(m: &Array2<f64>, w: &Array2<f64>) -> f64 {
    frobenius(&(m - w)) / (1.0 + frobenius(w))
}
