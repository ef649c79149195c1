//! Conditional mean embeddings fitted as vector-valued ridge regression.
//!
//! A model is stored as an `n x n` coefficient matrix `C` over the training
//! sample and represents
//!
//! ```text
//! mu(x) = sum_{i,j} C[i,j] K(x_i, x) L(y_j, .)
//! ```
//!
//! so the weight on `L(y_j, .)` at a query `x` is `alpha(x) = C^T k_x`. The
//! dense estimator uses `C = W = (K + lambda * n * I)^{-1}`: the ridge shift
//! is always `lambda * n`, never `lambda` alone. `W` is symmetric, so for the
//! dense estimator `alpha(x) = W k_x` as usual; sparse approximations plug in
//! an arbitrary `C` and go through the same evaluation path.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{cross_gram, gram, GramMatrix, KernelSpec};
use crate::linalg::{frobenius_inner, sym_eig_max, Cholesky};
use crate::par;

/// Round-off allowance below zero before a squared RKHS distance is treated as an error.
const NEG_LOSS_TOL: f64 = 1e-10;

/// Paired sample `{(x_i, y_i)}`; one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    xs: Array2<f64>,
    ys: Array2<f64>,
}

impl TrainingSet {
    pub fn new(xs: Array2<f64>, ys: Array2<f64>) -> Result<Self> {
        if xs.nrows() == 0 {
            return Err(Error::input("training set must contain at least one pair"));
        }
        if xs.nrows() != ys.nrows() {
            return Err(Error::input(format!(
                "{} inputs but {} outputs",
                xs.nrows(),
                ys.nrows()
            )));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("training set contains non-finite values"));
        }
        Ok(Self {
            xs: xs.as_standard_layout().into_owned(),
            ys: ys.as_standard_layout().into_owned(),
        })
    }

    pub fn len(&self) -> usize {
        self.xs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn xs(&self) -> ArrayView2<'_, f64> {
        self.xs.view()
    }

    pub fn ys(&self) -> ArrayView2<'_, f64> {
        self.ys.view()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::input(format!(
                "index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Self::new(self.xs.select(Axis(0), indices), self.ys.select(Axis(0), indices))
    }
}

/// Fitted (or coefficient-substituted) conditional mean embedding.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    train: TrainingSet,
    kspec: KernelSpec,
    lspec: KernelSpec,
    lambda: f64,
    coef: Array2<f64>,
    kgram: GramMatrix,
    lgram: GramMatrix,
}

/// Fit the ridge estimator `W = (K + lambda n I)^{-1}`.
pub fn fit(train: &TrainingSet, kspec: KernelSpec, lspec: KernelSpec, lambda: f64) -> Result<EmbeddingModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::input(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    let kgram = gram(&kspec, train.xs())?;
    let lgram = gram(&lspec, train.ys())?;
    let n = train.len();
    let mut shifted = kgram.entries().clone();
    shifted.diag_mut().mapv_inplace(|d| d + lambda * n as f64);
    let w = Cholesky::factor(shifted.view())?.inverse();
    Ok(EmbeddingModel {
        train: train.clone(),
        kspec,
        lspec,
        lambda,
        coef: w,
        kgram,
        lgram,
    })
}

impl EmbeddingModel {
    /// Same training data and kernels, different coefficient matrix.
    pub fn with_coefficients(&self, coef: Array2<f64>) -> Result<Self> {
        let n = self.train.len();
        if coef.dim() != (n, n) {
            return Err(Error::input(format!(
                "coefficient matrix is {:?}, expected ({n}, {n})",
                coef.dim()
            )));
        }
        if coef.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("coefficient matrix contains non-finite values"));
        }
        Ok(Self { coef, ..self.clone() })
    }

    pub fn train(&self) -> &TrainingSet {
        &self.train
    }

    pub fn kspec(&self) -> &KernelSpec {
        &self.kspec
    }

    pub fn lspec(&self) -> &KernelSpec {
        &self.lspec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.train.len()
    }

    /// Coefficient matrix (`W` for a freshly fitted model).
    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coef
    }

    pub fn kgram(&self) -> &GramMatrix {
        &self.kgram
    }

    pub fn lgram(&self) -> &GramMatrix {
        &self.lgram
    }

    /// Largest eigenvalue of the coefficient matrix (the operator norm for symmetric PSD `W`).
    pub fn coef_op_norm(&self) -> Result<f64> {
        sym_eig_max(self.coef.view(), 1e-9)
    }

    /// Weights on `L(y_j, .)` at query `x`.
    pub fn alpha(&self, x: &[f64]) -> Result<Array1<f64>> {
        let mut kx = Array1::zeros(self.n());
        for (k, xi) in kx.iter_mut().zip(self.train.xs.outer_iter()) {
            *k = self.kspec.eval(xi.as_slice().expect("row-major"), x)?;
        }
        Ok(self.coef.t().dot(&kx))
    }

    /// `alpha` for every row of `xs`; result row `t` is `alpha(xs[t])`.
    pub fn alpha_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let kc = cross_gram(&self.kspec, xs, self.train.xs())?;
        Ok(kc.entries().dot(&self.coef))
    }

    /// Estimate of `E[h(Y) | X = x]` from the values `h(y_i)` on the training outputs.
    pub fn cond_expect(&self, h_values: ArrayView1<f64>, x: &[f64]) -> Result<f64> {
        if h_values.len() != self.n() {
            return Err(Error::input(format!(
                "got {} h-values for {} training outputs",
                h_values.len(),
                self.n()
            )));
        }
        Ok(self.alpha(x)?.dot(&h_values))
    }

    /// `|L(y, .) - mu(x)|^2_L`.
    pub fn point_loss(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let a = self.alpha(x)?;
        let mut ly = Array1::zeros(self.n());
        for (l, yi) in ly.iter_mut().zip(self.train.ys.outer_iter()) {
            *l = self.lspec.eval(yi.as_slice().expect("row-major"), y)?;
        }
        let lyy = self.lspec.eval(y, y)?;
        let quad = a.dot(&self.lgram.entries().dot(&a));
        clamp_loss(lyy - 2.0 * a.dot(&ly) + quad, lyy + quad)
    }

    /// Per-row losses for a batch of pairs.
    pub fn point_losses(&self, test: &TrainingSet) -> Result<Array1<f64>> {
        let a = self.alpha_batch(test.xs())?;
        let lc = cross_gram(&self.lspec, test.ys(), self.train.ys())?;
        let la = a.dot(self.lgram.entries());
        let mut out = Array1::zeros(test.len());
        for (t, o) in out.iter_mut().enumerate() {
            let y = test.ys.row(t);
            let y = y.as_slice().expect("row-major");
            let lyy = self.lspec.eval_unchecked(y, y);
            let cross = a.row(t).dot(&lc.entries().row(t));
            let quad = a.row(t).dot(&la.row(t));
            *o = clamp_loss(lyy - 2.0 * cross + quad, lyy + quad)?;
        }
        Ok(out)
    }

    /// Mean point loss over `test` (mean, not sum; multiply by `test.len()` for the sum).
    pub fn empirical_risk(&self, test: &TrainingSet) -> Result<f64> {
        Ok(self.point_losses(test)?.mean().expect("nonempty test set"))
    }

    /// `|mu|^2` in the `K (x) L` norm: `tr(C^T K C L)`.
    pub fn rkhs_norm_sq(&self) -> f64 {
        let kc = self.kgram.entries().dot(&self.coef);
        let kcl = kc.dot(self.lgram.entries());
        frobenius_inner(&self.coef, &kcl).max(0.0)
    }

    /// `sum_i |L(y_i, .) - mu(x_i)|^2 + lambda n |mu|^2`, the criterion the
    /// dense estimator minimizes under the `lambda n` ridge convention.
    pub fn regularized_objective(&self) -> Result<f64> {
        let data: f64 = self.point_losses(&self.train)?.sum();
        Ok(data + self.lambda * self.n() as f64 * self.rkhs_norm_sq())
    }
}

fn clamp_loss(v: f64, scale: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -NEG_LOSS_TOL * (1.0 + scale.abs()) {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "squared RKHS distance came out negative: {v:e}"
        )))
    }
}

/// One cross-validation candidate: a ridge parameter and, for Gaussian input
/// kernels, an optional bandwidth override.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub bandwidth: Option<f64>,
}

impl GridPoint {
    pub fn new(lambda: f64, bandwidth: Option<f64>) -> Self {
        Self { lambda, bandwidth }
    }
}

/// Held-out surrogate losses for every grid point and fold.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub grid: Vec<GridPoint>,
    /// `grid.len() x folds`; entry is the mean held-out point loss.
    pub fold_errors: Array2<f64>,
    pub best: usize,
}

impl CvReport {
    pub fn mean_errors(&self) -> Array1<f64> {
        self.fold_errors.mean_axis(Axis(1)).expect("at least one fold")
    }

    pub fn best_point(&self) -> GridPoint {
        self.grid[self.best]
    }
}

/// Seeded shuffle split into `folds` contiguous blocks; returns held-out indices per fold.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::input(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::input(format!("{folds} folds requested for {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// K-fold cross-validation of `(lambda, bandwidth)` against the held-out surrogate loss.
///
/// The winner minimizes the mean fold error; exact ties go to the larger lambda.
pub fn cross_validate(
    train: &TrainingSet,
    kspec: KernelSpec,
    lspec: KernelSpec,
    grid: &[GridPoint],
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(Error::input("cross-validation grid is empty"));
    }
    let assignment = fold_assignment(train.len(), folds, seed)?;
    let splits: Vec<(TrainingSet, TrainingSet)> = assignment
        .iter()
        .map(|held| {
            let mut keep = vec![true; train.len()];
            held.iter().for_each(|&i| keep[i] = false);
            let fit_idx: Vec<usize> = (0..train.len()).filter(|&i| keep[i]).collect();
            Ok((train.subset(&fit_idx)?, train.subset(held)?))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..folds).map(move |f| (g, f))).collect();
    let errors = par::try_map(&jobs, |&(g, f)| {
        let point = grid[g];
        let k = match point.bandwidth {
            Some(bw) => kspec.with_bandwidth(bw)?,
            None => kspec,
        };
        let (fit_set, held) = &splits[f];
        fit(fit_set, k, lspec, point.lambda)?.empirical_risk(held)
    })?;
    let fold_errors = Array2::from_shape_vec((grid.len(), folds), errors).expect("grid x folds");

    let means = fold_errors.mean_axis(Axis(1)).expect("folds >= 2");
    let mut best = 0;
    for g in 1..grid.len() {
        if means[g] < means[best] || (means[g] == means[best] && grid[g].lambda > grid[best].lambda) {
            best = g;
        }
    }
    Ok(CvReport {
        grid: grid.to_vec(),
        fold_errors,
        best,
    })
}
