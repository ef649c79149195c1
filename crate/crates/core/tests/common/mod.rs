//! Brute-force oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

use cme::sparse::{grad_smooth, Penalty, SparseProblem};
use cme::{fit, EmbeddingModel, KernelSpec, TrainingSet};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[[i, c]].abs().partial_cmp(&m[[j, c]].abs()).unwrap())
            .unwrap();
        assert!(m[[p, c]].abs() > 1e-300, "singular matrix in oracle");
        for k in 0..n {
            m.swap([c, k], [p, k]);
            inv.swap([c, k], [p, k]);
        }
        let d = m[[c, c]];
        for k in 0..n {
            m[[c, k]] /= d;
            inv[[c, k]] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[[r, c]];
                if f != 0.0 {
                    for k in 0..n {
                        m[[r, k]] -= f * m[[c, k]];
                        inv[[r, k]] -= f * inv[[c, k]];
                    }
                }
            }
        }
    }
    inv
}

/// Quadruple-loop `sum_{i,j,k,l} D_ij K_ik D_kl L_lj` with `D = M - W`.
pub fn smooth_by_loops(k: &Array2<f64>, l: &Array2<f64>, w: &Array2<f64>, m: &Array2<f64>) -> f64 {
    let n = w.nrows();
    let d = m - w;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    s += d[[i, j]] * k[[i, a]] * d[[a, b]] * l[[b, j]];
                }
            }
        }
    }
    s
}

/// Random points in `[0, side]^dim`, at least `min_sep` apart.
pub fn separated_points(n: usize, dim: usize, side: f64, min_sep: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    while pts.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..side)).collect();
        let ok = pts.iter().all(|q| {
            let d2: f64 = q.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= min_sep
        });
        if ok {
            pts.push(p);
        }
    }
    Array2::from_shape_fn((n, dim), |(i, j)| pts[i][j])
}

pub fn random_points(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0))
}

/// A fitted Gaussian-kernel model on `n` random pairs.
pub fn random_model(n: usize, lambda: f64, bandwidth: f64, rng: &mut ChaCha8Rng) -> EmbeddingModel {
    let xs = random_points(n, 2, rng);
    let ys = random_points(n, 1, rng);
    let train = TrainingSet::new(xs, ys).unwrap();
    let k = KernelSpec::gaussian(bandwidth, 2).unwrap();
    let l = KernelSpec::gaussian(bandwidth, 1).unwrap();
    fit(&train, k, l, lambda).unwrap()
}

/// Cyclic coordinate descent for the entrywise-l1 matrix Lasso.
///
/// Coordinate `(i, j)` has curvature `2 K_ii L_jj` and exact minimizer
/// `S(M_ij - g_ij / (2 a), gamma / (2 a))` with `a = K_ii L_jj`.
pub fn coordinate_descent_l1(p: &SparseProblem, sweeps: usize, tol: f64) -> Array2<f64> {
    let (k, l, w) = (p.k(), p.l(), p.w());
    let n = w.nrows();
    let mut m = Array2::<f64>::zeros((n, n));
    // R = K (M - W) L, updated by rank-one corrections
    let mut r = k.dot(&(&m - w)).dot(l);
    for _ in 0..sweeps {
        let mut biggest = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = k[[i, i]] * l[[j, j]];
                if a <= 0.0 {
                    continue;
                }
                let g = 2.0 * r[[i, j]];
                let z = m[[i, j]] - g / (2.0 * a);
                let t = p.gamma() / (2.0 * a);
                let new = z.signum() * (z.abs() - t).max(0.0);
                let delta = new - m[[i, j]];
                if delta != 0.0 {
                    m[[i, j]] = new;
                    for u in 0..n {
                        let ku = k[[u, i]] * delta;
                        if ku != 0.0 {
                            for v in 0..n {
                                r[[u, v]] += ku * l[[j, v]];
                            }
                        }
                    }
                    biggest = biggest.max(delta.abs());
                }
            }
        }
        if biggest <= tol {
            break;
        }
    }
    m
}

/// Largest violation of the first-order optimality conditions at `m`,
/// measured against `eps = 1e-4 * max(1, gamma, |grad|_inf)`; returns
/// `(violation, eps)`.
pub fn subgradient_violation(p: &SparseProblem, m: &Array2<f64>) -> (f64, f64) {
    let g = grad_smooth(p, m).unwrap();
    let gamma = p.gamma();
    let ginf = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let eps = 1e-4 * 1.0f64.max(gamma).max(ginf);
    let zero = 1e-12;
    let group = |gv: Array1<f64>, mv: Array1<f64>| -> f64 {
        let mn = mv.dot(&mv).sqrt();
        if mn > zero {
            (&gv + &(&mv * (gamma / mn))).dot(&(&gv + &(&mv * (gamma / mn)))).sqrt()
        } else {
            (gv.dot(&gv).sqrt() - gamma).max(0.0)
        }
    };
    let viol = match p.penalty() {
        Penalty::EntrywiseL1 => g
            .iter()
            .zip(m.iter())
            .map(|(&gv, &mv)| {
                if mv.abs() > zero {
                    (gv + gamma * mv.signum()).abs()
                } else {
                    (gv.abs() - gamma).max(0.0)
                }
            })
            .fold(0.0, f64::max),
        Penalty::RowGroup => g
            .outer_iter()
            .zip(m.outer_iter())
            .map(|(gr, mr)| group(gr.to_owned(), mr.to_owned()))
            .fold(0.0, f64::max),
        Penalty::ColGroup => g
            .axis_iter(Axis(1))
            .zip(m.axis_iter(Axis(1)))
            .map(|(gc, mc)| group(gc.to_owned(), mc.to_owned()))
            .fold(0.0, f64::max),
    };
    (viol, eps)
}

/// Scalar kernel ridge prediction `k_x^T (K + lambda n I)^{-1} t` by explicit inversion.
pub fn scalar_krr(k: &Array2<f64>, kx: &Array1<f64>, targets: &Array1<f64>, lambda: f64) -> f64 {
    let n = k.nrows();
    let inv = gauss_jordan_inverse(&(k + &(Array2::<f64>::eye(n) * (lambda * n as f64))));
    kx.dot(&inv.dot(targets))
}

/// Exact refinement of an l1 solution on its support: with the support `S`
/// and signs `s` fixed, stationarity reads
/// `sum_{(a,b) in S} K_ia L_bj M_ab = (K W L)_ij - gamma s_ij / 2` for `(i,j) in S`,
/// a linear system solved here by Gauss-Jordan. Returns `m` unchanged when the
/// solve breaks the sign pattern.
pub fn polish_support_l1(p: &SparseProblem, m: &Array2<f64>) -> Array2<f64> {
    let (k, l, w) = (p.k(), p.l(), p.w());
    let support: Vec<(usize, usize)> = m
        .indexed_iter()
        .filter(|(_, v)| v.abs() > 1e-12)
        .map(|(ij, _)| ij)
        .collect();
    if support.is_empty() {
        return m.clone();
    }
    let s = support.len();
    let h = Array2::from_shape_fn((s, s), |(r, c)| {
        let (i, j) = support[r];
        let (a, b) = support[c];
        k[[i, a]] * l[[b, j]]
    });
    let kwl = k.dot(w).dot(l);
    let rhs = Array1::from_shape_fn(s, |r| {
        let (i, j) = support[r];
        kwl[[i, j]] - p.gamma() * m[[i, j]].signum() / 2.0
    });
    let sol = gauss_jordan_inverse(&h).dot(&rhs);
    let mut out = Array2::zeros(m.dim());
    for (r, &(i, j)) in support.iter().enumerate() {
        if p.gamma() > 0.0 && sol[r].signum() != m[[i, j]].signum() {
            return m.clone();
        }
        out[[i, j]] = sol[r];
    }
    out
}
