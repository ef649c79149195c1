//! JSON experiment configs, one struct per command.
//!
//! Unknown keys are rejected and every numeric field is range-checked before
//! any computation starts. Relative paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::kernels::{KernelKind, KernelSpec};
use crate::pendulum::{linspace, PendulumParams};
use crate::ratecheck::{DiscreteDistribution, Schedule};
use crate::sparse::{FistaOptions, Penalty, DEFAULT_MAX_ITER, DEFAULT_TOL};

use super::CliError;

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<(), CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be nonnegative and finite, got {v}")))
    }
}

fn nonempty<T>(field: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        Err(invalid(field, "must not be empty"))
    } else {
        Ok(())
    }
}

/// Read and parse a config file.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian { bandwidth: f64 },
    Linear,
    Delta,
}

impl KernelConfig {
    pub fn validate(&self, field: &str) -> Result<(), CliError> {
        if let KernelConfig::Gaussian { bandwidth } = self {
            positive(&format!("{field}.bandwidth"), *bandwidth)?;
        }
        Ok(())
    }

    pub fn spec(&self, dim: usize) -> Result<KernelSpec, CliError> {
        let kind = match *self {
            KernelConfig::Gaussian { bandwidth } => KernelKind::Gaussian { bandwidth },
            KernelConfig::Linear => KernelKind::Linear,
            KernelConfig::Delta => KernelKind::Delta,
        };
        KernelSpec::new(kind, dim).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            KernelConfig::Gaussian { bandwidth } => Some(*bandwidth),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelConfig::Gaussian { .. } => "gaussian",
            KernelConfig::Linear => "linear",
            KernelConfig::Delta => "delta",
        }
    }
}

fn default_gaussian() -> KernelConfig {
    KernelConfig::Gaussian { bandwidth: 0.5 }
}

/// Pendulum settings; every field defaults to the standard swing-up setup.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumConfig {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub friction: f64,
    pub dt: f64,
    pub torque_min: f64,
    pub torque_max: f64,
    pub omega_max: f64,
    pub discount: f64,
    /// Number of evenly spaced torque levels, used when `torque_grid` is absent.
    pub torque_levels: usize,
    pub torque_grid: Option<Vec<f64>>,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        let p = PendulumParams::default();
        Self {
            mass: p.mass,
            length: p.length,
            gravity: p.gravity,
            friction: p.friction,
            dt: p.dt,
            torque_min: p.torque_min,
            torque_max: p.torque_max,
            omega_max: p.omega_max,
            discount: p.discount,
            torque_levels: p.torque_grid.len(),
            torque_grid: None,
        }
    }
}

impl PendulumConfig {
    pub fn params(&self) -> Result<PendulumParams, CliError> {
        if self.torque_grid.is_none() && self.torque_levels == 0 {
            return Err(invalid("pendulum.torque_levels", "must be at least 1"));
        }
        let p = PendulumParams {
            mass: self.mass,
            length: self.length,
            gravity: self.gravity,
            friction: self.friction,
            dt: self.dt,
            torque_min: self.torque_min,
            torque_max: self.torque_max,
            omega_max: self.omega_max,
            discount: self.discount,
            torque_grid: self
                .torque_grid
                .clone()
                .unwrap_or_else(|| linspace(self.torque_min, self.torque_max, self.torque_levels)),
        };
        p.validate().map_err(|e| invalid("pendulum", e))?;
        Ok(p)
    }
}

/// Where training (and test) pairs come from.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Headered CSV files; without `test` the training file is reused.
    Csv { train: PathBuf, test: Option<PathBuf> },
    /// Freshly simulated pendulum transitions.
    Pendulum {
        n_train: usize,
        n_test: usize,
        #[serde(default)]
        params: PendulumConfig,
    },
}

impl DataConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            DataConfig::Csv { .. } => Ok(()),
            DataConfig::Pendulum {
                n_train,
                n_test,
                params,
            } => {
                if *n_train == 0 {
                    return Err(invalid("data.n_train", "must be at least 1"));
                }
                if *n_test == 0 {
                    return Err(invalid("data.n_test", "must be at least 1"));
                }
                params.params().map(|_| ())
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_gaussian")]
    pub input_kernel: KernelConfig,
    #[serde(default = "default_gaussian")]
    pub output_kernel: KernelConfig,
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        positive("lambda", self.lambda)?;
        self.input_kernel.validate("input_kernel")?;
        self.output_kernel.validate("output_kernel")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_gaussian")]
    pub input_kernel: KernelConfig,
    #[serde(default = "default_gaussian")]
    pub output_kernel: KernelConfig,
    pub lambdas: Vec<f64>,
    /// Input-kernel bandwidths to cross with `lambdas` (Gaussian input kernel only).
    #[serde(default)]
    pub bandwidths: Option<Vec<f64>>,
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
}

impl CvConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        nonempty("lambdas", &self.lambdas)?;
        for l in &self.lambdas {
            positive("lambdas", *l)?;
        }
        if let Some(bw) = &self.bandwidths {
            nonempty("bandwidths", bw)?;
            if !matches!(self.input_kernel, KernelConfig::Gaussian { .. }) {
                return Err(invalid("bandwidths", "only valid with a gaussian input_kernel"));
            }
            for b in bw {
                positive("bandwidths", *b)?;
            }
        }
        if self.folds < 2 {
            return Err(invalid("folds", format!("must be at least 2, got {}", self.folds)));
        }
        self.input_kernel.validate("input_kernel")?;
        self.output_kernel.validate("output_kernel")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsifyConfig {
    pub data: DataConfig,
    #[serde(default = "default_gaussian")]
    pub input_kernel: KernelConfig,
    #[serde(default = "default_gaussian")]
    pub output_kernel: KernelConfig,
    pub lambda: f64,
    pub gammas: Vec<f64>,
    /// Interpret `gammas` as fractions of the smallest gamma that zeroes the solution.
    #[serde(default)]
    pub gamma_relative: bool,
    #[serde(default = "default_penalty")]
    pub penalty: String,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_penalty() -> String {
    "entrywise_l1".into()
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn check_gammas(gammas: &[f64]) -> Result<(), CliError> {
    nonempty("gammas", gammas)?;
    for g in gammas {
        nonnegative("gammas", *g)?;
    }
    if gammas.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("gammas", "must be sorted ascending"));
    }
    Ok(())
}

fn check_solver(max_iter: usize, tol: f64) -> Result<FistaOptions, CliError> {
    if max_iter == 0 {
        return Err(invalid("max_iter", "must be at least 1"));
    }
    positive("tol", tol)?;
    Ok(FistaOptions {
        max_iter,
        tol,
        ..FistaOptions::default()
    })
}

impl SparsifyConfig {
    pub fn validate(&self) -> Result<(Penalty, FistaOptions), CliError> {
        self.data.validate()?;
        positive("lambda", self.lambda)?;
        check_gammas(&self.gammas)?;
        let penalty = self.penalty.parse().map_err(|e| invalid("penalty", e))?;
        let opts = check_solver(self.max_iter, self.tol)?;
        self.input_kernel.validate("input_kernel")?;
        self.output_kernel.validate("output_kernel")?;
        Ok((penalty, opts))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub data: DataConfig,
    #[serde(default = "default_gaussian")]
    pub input_kernel: KernelConfig,
    #[serde(default = "default_gaussian")]
    pub output_kernel: KernelConfig,
    pub lambda: f64,
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub gamma_relative: bool,
    /// Cholesky ranks (number of retained training points).
    pub ranks: Vec<usize>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

impl CompareConfig {
    pub fn validate(&self) -> Result<FistaOptions, CliError> {
        self.data.validate()?;
        positive("lambda", self.lambda)?;
        check_gammas(&self.gammas)?;
        nonempty("ranks", &self.ranks)?;
        if self.ranks.contains(&0) {
            return Err(invalid("ranks", "must be at least 1"));
        }
        if let DataConfig::Pendulum { n_train, .. } = self.data {
            if let Some(r) = self.ranks.iter().find(|&&r| r > n_train) {
                return Err(invalid("ranks", format!("rank {r} exceeds n_train = {n_train}")));
            }
        }
        self.input_kernel.validate("input_kernel")?;
        self.output_kernel.validate("output_kernel")?;
        check_solver(self.max_iter, self.tol)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub px: Vec<f64>,
    pub pyx: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub a: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    /// Defaults to the built-in 4 x 4 oracle.
    #[serde(default)]
    pub distribution: Option<DistributionConfig>,
    pub n_grid: Vec<usize>,
    /// Number of seeds; runs use `seed, seed + 1, ...`.
    pub replicates: usize,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl RateConfig {
    pub fn validate(&self) -> Result<(DiscreteDistribution, Schedule), CliError> {
        nonempty("n_grid", &self.n_grid)?;
        if self.n_grid.contains(&0) {
            return Err(invalid("n_grid", "sample sizes must be at least 1"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n_grid", "must be strictly ascending"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        let schedule = match &self.schedule {
            Some(s) => {
                positive("schedule.a", s.a)?;
                if !s.beta.is_finite() {
                    return Err(invalid("schedule.beta", "must be finite"));
                }
                Schedule { a: s.a, beta: s.beta }
            }
            None => Schedule::default(),
        };
        let dist = match &self.distribution {
            None => DiscreteDistribution::four_symbol_oracle(),
            Some(d) => {
                let ny = d.pyx.first().map_or(0, Vec::len);
                if d.pyx.iter().any(|r| r.len() != ny) {
                    return Err(invalid("distribution.pyx", "rows must have equal length"));
                }
                let flat: Vec<f64> = d.pyx.iter().flatten().copied().collect();
                let pyx = ndarray::Array2::from_shape_vec((d.pyx.len(), ny), flat)
                    .map_err(|e| invalid("distribution.pyx", e))?;
                DiscreteDistribution::new(d.px.clone(), pyx).map_err(|e| invalid("distribution", e))?
            }
        };
        Ok((dist, schedule))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replicates as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumRunConfig {
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_gaussian")]
    pub input_kernel: KernelConfig,
    #[serde(default = "default_gaussian")]
    pub output_kernel: KernelConfig,
    #[serde(default = "default_pendulum_lambda")]
    pub lambda: f64,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub pendulum: PendulumConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_train() -> usize {
    200
}

pub const DEFAULT_PENDULUM_LAMBDA: f64 = 2e-3;

fn default_pendulum_lambda() -> f64 {
    DEFAULT_PENDULUM_LAMBDA
}

fn default_sweeps() -> usize {
    50
}

fn default_episodes() -> usize {
    100
}

fn default_horizon() -> usize {
    100
}

impl PendulumRunConfig {
    pub fn validate(&self) -> Result<PendulumParams, CliError> {
        if self.n_train == 0 {
            return Err(invalid("n_train", "must be at least 1"));
        }
        positive("lambda", self.lambda)?;
        if self.sweeps == 0 {
            return Err(invalid("sweeps", "must be at least 1"));
        }
        if self.episodes == 0 {
            return Err(invalid("episodes", "must be at least 1"));
        }
        self.input_kernel.validate("input_kernel")?;
        self.output_kernel.validate("output_kernel")?;
        self.pendulum.params()
    }
}
