//! Finite-alphabet oracles for checking the estimator's risk behaviour.
//!
//! With delta kernels on both sides, `L(y, .)` is the indicator vector
//! `e_y` and an embedding `mu(x)` is just a vector over the output alphabet,
//! so the surrogate risk `E |e_Y - mu(X)|^2` can be enumerated exactly. The
//! true conditional embedding is the table `p(y | x)` itself.

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::{EmbeddingModel, TrainingSet};
use crate::error::{Error, Result};
use crate::par;

const PROB_TOL: f64 = 1e-12;

/// Joint law on `{0..nx} x {0..ny}` given as `p(x)` and `p(y | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    px: Array1<f64>,
    pyx: Array2<f64>,
}

impl DiscreteDistribution {
    pub fn new(px: Vec<f64>, pyx: Array2<f64>) -> Result<Self> {
        if px.is_empty() || pyx.ncols() == 0 {
            return Err(Error::input("alphabets must be nonempty"));
        }
        if pyx.nrows() != px.len() {
            return Err(Error::input(format!(
                "p(y|x) has {} rows for {} input symbols",
                pyx.nrows(),
                px.len()
            )));
        }
        if px.iter().chain(pyx.iter()).any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::input("probabilities must be finite and nonnegative"));
        }
        if (px.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
            return Err(Error::input("p(x) does not sum to one"));
        }
        for (i, row) in pyx.outer_iter().enumerate() {
            if (row.sum() - 1.0).abs() > PROB_TOL {
                return Err(Error::input(format!("p(y|x={i}) does not sum to one")));
            }
        }
        Ok(Self {
            px: Array1::from(px),
            pyx,
        })
    }

    /// The 4 x 4 oracle used by the rate experiments.
    pub fn four_symbol_oracle() -> Self {
        let pyx = ndarray::array![
            [0.7, 0.1, 0.1, 0.1],
            [0.25, 0.25, 0.25, 0.25],
            [0.1, 0.2, 0.3, 0.4],
            [0.05, 0.05, 0.45, 0.45],
        ];
        Self::new(vec![0.1, 0.2, 0.3, 0.4], pyx).expect("valid oracle")
    }

    pub fn nx(&self) -> usize {
        self.px.len()
    }

    pub fn ny(&self) -> usize {
        self.pyx.ncols()
    }

    pub fn px(&self) -> &Array1<f64> {
        &self.px
    }

    pub fn pyx(&self) -> &Array2<f64> {
        &self.pyx
    }
}

/// `n` i.i.d. pairs; symbols are stored as single-coordinate points holding the index.
pub fn sample(dist: &DiscreteDistribution, n: usize, seed: u64) -> Result<TrainingSet> {
    if n == 0 {
        return Err(Error::input("sample size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xd = WeightedIndex::new(dist.px.iter()).map_err(|e| Error::input(e.to_string()))?;
    let yds: Vec<Option<WeightedIndex<f64>>> = dist
        .pyx
        .outer_iter()
        .zip(dist.px.iter())
        .map(|(row, &p)| {
            if p > 0.0 {
                WeightedIndex::new(row.iter().copied()).ok()
            } else {
                None
            }
        })
        .collect();
    let mut xs = Array2::zeros((n, 1));
    let mut ys = Array2::zeros((n, 1));
    for i in 0..n {
        let x = xd.sample(&mut rng);
        let y = yds[x]
            .as_ref()
            .expect("sampled symbol has positive mass")
            .sample(&mut rng);
        xs[[i, 0]] = x as f64;
        ys[[i, 0]] = y as f64;
    }
    TrainingSet::new(xs, ys)
}

/// `mu*(x)(y) = p(y | x)`.
pub fn true_embedding(dist: &DiscreteDistribution) -> Array2<f64> {
    dist.pyx.clone()
}

/// `E |e_Y - mu(X)|^2` for an embedding table `mu(x)(y)` (rows are input symbols).
pub fn surrogate_risk_of_table(dist: &DiscreteDistribution, table: &Array2<f64>) -> Result<f64> {
    if table.dim() != dist.pyx.dim() {
        return Err(Error::input(format!(
            "embedding table is {:?}, alphabet is {:?}",
            table.dim(),
            dist.pyx.dim()
        )));
    }
    let mut risk = 0.0;
    for x in 0..dist.nx() {
        let mu = table.row(x);
        let norm_sq = mu.dot(&mu);
        let cond = dist.pyx.row(x);
        // sum_y p(y|x) (1 - 2 mu_y + |mu|^2)
        let inner = cond.sum() - 2.0 * cond.dot(&mu) + cond.sum() * norm_sq;
        risk += dist.px[x] * inner;
    }
    Ok(risk)
}

/// Risk of the true embedding: `sum_x p(x) (1 - sum_y p(y|x)^2)`.
pub fn irreducible_risk(dist: &DiscreteDistribution) -> f64 {
    dist.px
        .iter()
        .zip(dist.pyx.outer_iter())
        .map(|(&p, row)| p * (1.0 - row.dot(&row)))
        .sum()
}

fn symbol_index(v: f64, size: usize, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && (v as usize) < size {
        Ok(v as usize)
    } else {
        Err(Error::input(format!("{what} value {v} is not a symbol in 0..{size}")))
    }
}

/// Embedding table of a fitted model over the distribution's alphabets.
pub fn model_table(dist: &DiscreteDistribution, model: &EmbeddingModel) -> Result<Array2<f64>> {
    if !model.kspec().is_delta() || !model.lspec().is_delta() {
        return Err(Error::Unsupported(
            "exact surrogate risk needs delta kernels on inputs and outputs".into(),
        ));
    }
    if model.kspec().dim() != 1 || model.lspec().dim() != 1 {
        return Err(Error::Unsupported("symbols must be single-coordinate points".into()));
    }
    let ys: Vec<usize> = model
        .train()
        .ys()
        .column(0)
        .iter()
        .map(|&v| symbol_index(v, dist.ny(), "output"))
        .collect::<Result<_>>()?;
    let mut table = Array2::zeros(dist.pyx.dim());
    for x in 0..dist.nx() {
        let alpha = model.alpha(&[x as f64])?;
        for (a, &y) in alpha.iter().zip(&ys) {
            table[[x, y]] += a;
        }
    }
    Ok(table)
}

/// Exact surrogate risk of a fitted delta-kernel model.
pub fn exact_surrogate_risk(dist: &DiscreteDistribution, model: &EmbeddingModel) -> Result<f64> {
    surrogate_risk_of_table(dist, &model_table(dist, model)?)
}

/// Embedding table of the delta-kernel ridge estimator, computed from symbol counts.
///
/// With delta kernels the estimator groups by input symbol:
/// `mu(x)(y) = N(x, y) / (N(x) + lambda n)`, and zero for unseen `x`. This
/// avoids the `n x n` solve and is what the rate experiments use; it agrees
/// with [`crate::embedding::fit`] followed by [`model_table`].
pub fn delta_ridge_table(dist: &DiscreteDistribution, train: &TrainingSet, lambda: f64) -> Result<Array2<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::input(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    let mut counts = Array2::<f64>::zeros(dist.pyx.dim());
    for (x, y) in train.xs().column(0).iter().zip(train.ys().column(0)) {
        counts[[
            symbol_index(*x, dist.nx(), "input")?,
            symbol_index(*y, dist.ny(), "output")?,
        ]] += 1.0;
    }
    let shift = lambda * train.len() as f64;
    for mut row in counts.outer_iter_mut() {
        let total = row.sum();
        row.mapv_inplace(|c| c / (total + shift));
    }
    Ok(counts)
}

/// Ridge schedule `lambda_n = a * n^(-beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub a: f64,
    pub beta: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { a: 1.0, beta: 0.5 }
    }
}

impl Schedule {
    pub fn lambda(&self, n: usize) -> f64 {
        self.a * (n as f64).powf(-self.beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub n: usize,
    pub seed: u64,
    pub lambda_used: f64,
    /// Surrogate risk above the irreducible risk, clamped at zero.
    pub excess: f64,
    /// `max_{x,y} |mu_hat(x)(y) - p(y|x)|`.
    pub max_entry_error: f64,
}

/// Sample, fit and score every `(n, seed)` pair; output is ordered by `n`, then seed.
pub fn rate_experiment(
    dist: &DiscreteDistribution,
    n_grid: &[usize],
    seeds: &[u64],
    schedule: Schedule,
) -> Result<Vec<RateResult>> {
    if n_grid.is_empty() || seeds.is_empty() {
        return Err(Error::input("n_grid and seeds must be nonempty"));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("n_grid must be strictly ascending"));
    }
    if !(schedule.a > 0.0 && schedule.a.is_finite() && schedule.beta.is_finite()) {
        return Err(Error::input("schedule needs a > 0 and finite beta"));
    }
    let floor = irreducible_risk(dist);
    let truth = true_embedding(dist);
    let jobs: Vec<(usize, u64)> = n_grid
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    par::try_map(&jobs, |&(n, seed)| {
        let lambda = schedule.lambda(n);
        let train = sample(dist, n, seed)?;
        let table = delta_ridge_table(dist, &train, lambda)?;
        let risk = surrogate_risk_of_table(dist, &table)?;
        let excess = risk - floor;
        if excess < -1e-10 {
            return Err(Error::Numerical(format!("negative excess risk {excess:e} at n = {n}")));
        }
        let max_entry_error = (&table - &truth).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(RateResult {
            n,
            seed,
            lambda_used: lambda,
            excess: excess.max(0.0),
            max_entry_error,
        })
    })
}

/// Per-`n` averages `(n, mean excess, mean max-entry error)`, in order of first appearance.
pub fn mean_by_n(results: &[RateResult]) -> Vec<(usize, f64, f64)> {
    let mut out: Vec<(usize, f64, f64, usize)> = Vec::new();
    for r in results {
        match out.iter_mut().find(|e| e.0 == r.n) {
            Some(e) => {
                e.1 += r.excess;
                e.2 += r.max_entry_error;
                e.3 += 1;
            }
            None => out.push((r.n, r.excess, r.max_entry_error, 1)),
        }
    }
    out.into_iter()
        .map(|(n, e, m, c)| (n, e / c as f64, m / c as f64))
        .collect()
}

/// Least-squares slope of `log(mean excess)` against `log n`.
pub fn rate_slope(results: &[RateResult]) -> Result<f64> {
    let means = mean_by_n(results);
    if means.len() < 3 {
        return Err(Error::input(format!(
            "slope needs at least 3 distinct sample sizes, got {}",
            means.len()
        )));
    }
    if let Some(&(n, e, _)) = means.iter().find(|m| !(m.1 > 0.0)) {
        return Err(Error::input(format!(
            "mean excess at n = {n} is {e}; cannot take a log"
        )));
    }
    let pts: Vec<(f64, f64)> = means.iter().map(|&(n, e, _)| ((n as f64).ln(), e.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rr(n: usize, excess: f64) -> RateResult {
        RateResult {
            n,
            seed: 0,
            lambda_used: 1.0,
            excess,
            max_entry_error: 0.0,
        }
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.6], array![[1.0], [1.0]]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0], array![[0.5, 0.4]]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0], array![[1.5, -0.5]]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0], array![[1.0], [0.0]]).is_err());
    }

    #[test]
    fn point_mass_samples_identical() {
        let d = DiscreteDistribution::new(vec![0.0, 1.0], array![[0.5, 0.5], [0.0, 1.0]]).unwrap();
        let t = sample(&d, 50, 3).unwrap();
        assert!(t.xs().iter().all(|&v| v == 1.0));
        assert!(t.ys().iter().all(|&v| v == 1.0));
        assert!(sample(&d, 0, 3).is_err());
    }

    #[test]
    fn true_embedding_shapes() {
        let det = DiscreteDistribution::new(vec![0.5, 0.5], array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(true_embedding(&det), array![[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(irreducible_risk(&det), 0.0);
        let uni = DiscreteDistribution::new(vec![1.0], array![[0.25, 0.25, 0.25, 0.25]]).unwrap();
        assert!(true_embedding(&uni).iter().all(|&v| v == 0.25));
    }

    #[test]
    fn zero_embedding_has_unit_risk() {
        let d = DiscreteDistribution::four_symbol_oracle();
        let r = surrogate_risk_of_table(&d, &Array2::zeros((4, 4))).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn true_embedding_hits_irreducible_risk() {
        let d = DiscreteDistribution::four_symbol_oracle();
        let r = surrogate_risk_of_table(&d, &true_embedding(&d)).unwrap();
        // by hand: sum_x p(x) (1 - sum_y p(y|x)^2)
        let hand = 0.1 * (1.0 - (0.49 + 0.03))
            + 0.2 * (1.0 - 0.25)
            + 0.3 * (1.0 - (0.01 + 0.04 + 0.09 + 0.16))
            + 0.4 * (1.0 - (0.0025 + 0.0025 + 0.2025 + 0.2025));
        assert!((r - hand).abs() < 1e-14);
        assert!((irreducible_risk(&d) - hand).abs() < 1e-14);
    }

    #[test]
    fn slope_of_exact_power_laws() {
        let ns = [10usize, 40, 160, 640];
        let inv: Vec<_> = ns.iter().map(|&n| rr(n, 3.0 / n as f64)).collect();
        assert!((rate_slope(&inv).unwrap() + 1.0).abs() < 1e-9);
        let flat: Vec<_> = ns.iter().map(|&n| rr(n, 0.2)).collect();
        assert!(rate_slope(&flat).unwrap().abs() < 1e-12);
        let two_thirds: Vec<_> = ns.iter().map(|&n| rr(n, 0.7 * (n as f64).powf(-2.0 / 3.0))).collect();
        assert!((rate_slope(&two_thirds).unwrap() + 2.0 / 3.0).abs() < 1e-6);
        assert!(rate_slope(&inv[..2]).is_err());
    }

    #[test]
    fn experiment_argument_checks() {
        let d = DiscreteDistribution::four_symbol_oracle();
        assert!(rate_experiment(&d, &[], &[1], Schedule::default()).is_err());
        assert!(rate_experiment(&d, &[10], &[], Schedule::default()).is_err());
        assert!(rate_experiment(&d, &[20, 10], &[1], Schedule::default()).is_err());
        let one = rate_experiment(&d, &[10], &[5], Schedule::default()).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].excess >= 0.0);
    }
}
