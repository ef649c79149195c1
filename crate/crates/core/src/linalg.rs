//! Dense symmetric linear algebra: Cholesky solves, power iteration, shrinkage.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `A = L L^T`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor a symmetric positive definite matrix. Only the lower triangle of `a` is read.
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::input(format!(
                "expected a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let s = a[[j, j]] - l[j * n..j * n + j].iter().map(|v| v * v).sum::<f64>();
            if !(s > 0.0) {
                return Err(Error::Singular { index: j, value: s });
            }
            let d = s.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let (upper, lower) = l.split_at_mut(i * n);
                let row_j = &upper[j * n..j * n + j];
                let row_i = &mut lower[..n];
                let dot: f64 = row_i[..j].iter().zip(row_j).map(|(x, y)| x * y).sum();
                row_i[j] = (a[[i, j]] - dot) / d;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// The factor as a dense lower-triangular matrix.
    pub fn lower(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.n), self.l.clone()).expect("square buffer")
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let dot: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - dot) / self.at(i, i);
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| self.at(k, i) * x[k]).sum();
            x[i] = (x[i] - s) / self.at(i, i);
        }
    }

    /// Solve `A X = B` column by column.
    pub fn solve(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.n {
            return Err(Error::input(format!(
                "right-hand side has {} rows, matrix is {}x{}",
                b.nrows(),
                self.n,
                self.n
            )));
        }
        let mut out = Array2::zeros(b.raw_dim());
        let mut col = vec![0.0; self.n];
        for j in 0..b.ncols() {
            for (c, v) in col.iter_mut().zip(b.column(j)) {
                *c = *v;
            }
            self.solve_in_place(&mut col);
            for (o, v) in out.column_mut(j).iter_mut().zip(&col) {
                *o = *v;
            }
        }
        Ok(out)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Array1<f64>> {
        if b.len() != self.n {
            return Err(Error::input("right-hand side length mismatch"));
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(Array1::from(x))
    }

    /// Explicit inverse, symmetrized.
    pub fn inverse(&self) -> Array2<f64> {
        let eye = Array2::<f64>::eye(self.n);
        let inv = self.solve(eye.view()).expect("identity has matching shape");
        symmetrize(&inv)
    }
}

/// Result of [`solve_spd`].
#[derive(Debug, Clone)]
pub struct SpdSolveResult {
    pub solution: Array2<f64>,
    /// `|A X - B|_F`.
    pub residual_norm: f64,
}

/// Solve `A X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<SpdSolveResult> {
    let chol = Cholesky::factor(a)?;
    let solution = chol.solve(b)?;
    let residual_norm = frobenius(&(a.dot(&solution) - b));
    Ok(SpdSolveResult {
        solution,
        residual_norm,
    })
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    (a + &a.t()) * 0.5
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `sum_ij a_ij b_ij`, i.e. `tr(A^T B)`.
pub fn frobenius_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

const POWER_MAX_ITER: usize = 100_000;

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
///
/// Starts from the normalized all-ones vector; if that start is annihilated
/// (e.g. it is orthogonal to the dominant subspace) a deterministic
/// perturbed start is used instead. Stops once successive Rayleigh quotients
/// agree to relative tolerance `tol`.
pub fn sym_eig_max(a: ArrayView2<f64>, tol: f64) -> Result<f64> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::input("sym_eig_max needs a nonempty square matrix"));
    }
    if !(tol > 0.0) {
        return Err(Error::input("sym_eig_max tolerance must be positive"));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let ones = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let est = power_from(a, ones, tol)?;
    if est > 0.0 {
        return Ok(est);
    }
    let perturbed = Array1::from_iter((0..n).map(|i| 1.0 + ((i * 7919 % 104_729) as f64 / 104_729.0) - 0.5));
    power_from(a, perturbed, tol)
}

fn power_from(a: ArrayView2<f64>, mut v: Array1<f64>, tol: f64) -> Result<f64> {
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let w = a.dot(&v);
        let next = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return Ok(0.0);
        }
        if (next - lambda).abs() <= tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
        v = w / wn;
    }
    Err(Error::Convergence {
        iterations: POWER_MAX_ITER,
        estimate: lambda,
    })
}

/// `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    let m = z.abs() - t;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}
