//! Scalar kernels and Gram matrices.
//!
//! Points are rows of an `ndarray` matrix (or plain slices). Delta-kernel
//! points are symbols encoded as exact-equality-compared vectors, usually a
//! single coordinate holding the symbol index.
//!
//! The Gaussian kernel is parameterized as `exp(-|a - b|^2 / (2 sigma^2))`.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Gaussian {
        bandwidth: f64,
    },
    Linear,
    /// `1` on identical points, `0` otherwise.
    Delta,
}

/// A scalar kernel on a fixed-dimension domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    dim: usize,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64, dim: usize) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::input(format!(
                "gaussian bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Self::new(KernelKind::Gaussian { bandwidth }, dim)
    }

    pub fn linear(dim: usize) -> Result<Self> {
        Self::new(KernelKind::Linear, dim)
    }

    /// Delta kernel on symbols of `dim` coordinates (use `1` for integer-coded alphabets).
    pub fn delta(dim: usize) -> Result<Self> {
        Self::new(KernelKind::Delta, dim)
    }

    pub fn new(kind: KernelKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("kernel domain dimension must be positive"));
        }
        if let KernelKind::Gaussian { bandwidth } = kind {
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                return Err(Error::input(format!(
                    "gaussian bandwidth must be positive and finite, got {bandwidth}"
                )));
            }
        }
        Ok(Self { kind, dim })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_delta(&self) -> bool {
        matches!(self.kind, KernelKind::Delta)
    }

    /// Same kernel family with a new Gaussian bandwidth; other kinds are returned unchanged.
    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        match self.kind {
            KernelKind::Gaussian { .. } => Self::gaussian(bandwidth, self.dim),
            _ => Ok(*self),
        }
    }

    fn check(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::input(format!(
                "point has dimension {}, kernel expects {}",
                p.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.eval_unchecked(a, b))
    }

    /// Kernel value without the dimension check.
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Gaussian { bandwidth } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelKind::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelKind::Delta => {
                if a == b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `k(a, b)` for the given kernel.
pub fn eval_kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    spec.eval(a, b)
}

/// Matrix of kernel evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: Array2<f64>,
    symmetric: bool,
}

impl GramMatrix {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    /// True iff built from a single point set.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn trace(&self) -> f64 {
        self.entries.diag().sum()
    }
}

fn check_points(spec: &KernelSpec, points: &ArrayView2<f64>, what: &str) -> Result<()> {
    if points.nrows() == 0 {
        return Err(Error::input(format!("{what}: empty point sequence")));
    }
    if points.ncols() != spec.dim() {
        return Err(Error::input(format!(
            "{what}: points have dimension {}, kernel expects {}",
            points.ncols(),
            spec.dim()
        )));
    }
    Ok(())
}

/// Symmetric Gram matrix of `points` (one point per row).
///
/// Only the upper triangle is evaluated; the lower one is mirrored so that
/// symmetry holds bit-for-bit.
pub fn gram(spec: &KernelSpec, points: ArrayView2<f64>) -> Result<GramMatrix> {
    check_points(spec, &points, "gram")?;
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = points.outer_iter().map(|r| r.to_vec()).collect();
    let mut entries = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = spec.eval_unchecked(&rows[i], &rows[j]);
            entries[[i, j]] = v;
            entries[[j, i]] = v;
        }
    }
    Ok(GramMatrix {
        entries,
        symmetric: true,
    })
}

/// Rectangular matrix `k(rows[i], cols[j])`.
pub fn cross_gram(spec: &KernelSpec, rows: ArrayView2<f64>, cols: ArrayView2<f64>) -> Result<GramMatrix> {
    check_points(spec, &rows, "cross_gram rows")?;
    check_points(spec, &cols, "cross_gram cols")?;
    let cols_v: Vec<Vec<f64>> = cols.outer_iter().map(|r| r.to_vec()).collect();
    let mut entries = Array2::zeros((rows.nrows(), cols.nrows()));
    for (i, r) in rows.outer_iter().enumerate() {
        let r = r.to_vec();
        for (j, c) in cols_v.iter().enumerate() {
            entries[[i, j]] = spec.eval_unchecked(&r, c);
        }
    }
    Ok(GramMatrix {
        entries,
        symmetric: false,
    })
}
