//! The `cme` command-line driver.
//!
//! ```text
//! cme <fit|cv|sparsify|compare|rate|pendulum> --config <file.json> [--out <dir>] [--seed <n>]
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.
//! All randomness is seeded from the config (or `--seed`), so repeated runs
//! produce byte-identical CSVs.

pub mod config;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::embedding::{cross_validate, fit, EmbeddingModel, GridPoint, TrainingSet};
use crate::error::Error;
use crate::kernels::KernelSpec;
use crate::lowrank::cholesky_sweep;
use crate::pendulum::{collect_dataset, evaluate_policy, policy_iteration, reward, RandomPolicy, State};
use crate::ratecheck::{rate_experiment, rate_slope, RateResult};
use crate::sparse::{sparsity_sweep, Penalty, SparseProblem};

use config::{
    load, resolve, CompareConfig, CvConfig, DataConfig, FitConfig, KernelConfig, PendulumRunConfig, RateConfig,
    SparsifyConfig,
};
use io::{num, read_dataset, Table};

/// Failure of a CLI run, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(e) if e.is_input() => 2,
            CliError::Numeric(_) | CliError::Output(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cme", about = "Conditional mean embedding experiments", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "cme-out")]
    pub out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the ridge estimator; writes summary.csv and coefficients.csv.
    Fit(CommonArgs),
    /// Cross-validate lambda (and bandwidth); writes cv.csv.
    Cv(CommonArgs),
    /// FISTA sparsity sweep over gamma; writes sparsify.csv.
    Sparsify(CommonArgs),
    /// Lasso vs incomplete-Cholesky sparsification; writes compare.csv.
    Compare(CommonArgs),
    /// Excess-risk convergence on a discrete oracle; writes rate.csv and rate_slope.csv.
    Rate(CommonArgs),
    /// Pendulum swing-up value iteration; writes pendulum.csv, values.csv and sweeps.csv.
    Pendulum(CommonArgs),
}

/// Parse arguments, run, report errors on stderr, and return the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cme: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Fit(a) => run_fit(a),
        Command::Cv(a) => run_cv(a),
        Command::Sparsify(a) => run_sparsify(a),
        Command::Compare(a) => run_compare(a),
        Command::Rate(a) => run_rate(a),
        Command::Pendulum(a) => run_pendulum(a),
    }
}

fn config_dir(args: &CommonArgs) -> PathBuf {
    args.config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

fn kernels(
    input: &KernelConfig,
    output: &KernelConfig,
    data: &TrainingSet,
) -> Result<(KernelSpec, KernelSpec), CliError> {
    Ok((input.spec(data.xs().ncols())?, output.spec(data.ys().ncols())?))
}

fn load_data(data: &DataConfig, base: &Path, seed: u64) -> Result<(TrainingSet, TrainingSet), CliError> {
    match data {
        DataConfig::Csv { train, test } => {
            let tr = read_dataset(&resolve(base, train))?;
            let te = match test {
                Some(p) => read_dataset(&resolve(base, p))?,
                None => tr.clone(),
            };
            if tr.xs().ncols() != te.xs().ncols() || tr.ys().ncols() != te.ys().ncols() {
                return Err(CliError::Config(
                    "train and test datasets have different columns".into(),
                ));
            }
            Ok((tr, te))
        }
        DataConfig::Pendulum {
            n_train,
            n_test,
            params,
        } => {
            let p = params.params()?;
            let tr = collect_dataset(&p, *n_train, seed)?.to_training_set()?;
            let te = collect_dataset(&p, *n_test, seed.wrapping_add(1))?.to_training_set()?;
            Ok((tr, te))
        }
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn run_fit(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: FitConfig = load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let data = read_dataset(&resolve(&config_dir(args), &cfg.dataset))?;
    let (k, l) = kernels(&cfg.input_kernel, &cfg.output_kernel, &data)?;
    prepare_out(&args.out)?;

    let model = fit(&data, k, l, cfg.lambda)?;
    let n = model.n();
    let op = model.coef_op_norm()?;
    let bound = 1.0 / (cfg.lambda * n as f64);
    let mut summary = Table::new([
        "n",
        "lambda",
        "input_kernel",
        "input_bandwidth",
        "output_kernel",
        "output_bandwidth",
        "train_risk",
        "regularized_objective",
        "coef_op_norm",
        "op_norm_bound",
        "bound_ok",
    ]);
    summary.push([
        n.to_string(),
        num(cfg.lambda),
        cfg.input_kernel.name().into(),
        opt_num(cfg.input_kernel.bandwidth()),
        cfg.output_kernel.name().into(),
        opt_num(cfg.output_kernel.bandwidth()),
        num(model.empirical_risk(&data)?),
        num(model.regularized_objective()?),
        num(op),
        num(bound),
        (op <= bound + 1e-8).to_string(),
    ]);
    summary.write(&args.out.join("summary.csv"))?;
    coefficient_table(&model).write(&args.out.join("coefficients.csv"))
}

fn coefficient_table(model: &EmbeddingModel) -> Table {
    let n = model.n();
    let mut t = Table::new((0..n).map(|j| format!("c{j}")));
    for row in model.coefficients().outer_iter() {
        t.push(row.iter().map(|v| num(*v)));
    }
    t
}

pub fn run_cv(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: CvConfig = load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let data = read_dataset(&resolve(&config_dir(args), &cfg.dataset))?;
    if cfg.folds > data.len() {
        return Err(CliError::Config(format!(
            "folds: {} folds requested for {} samples",
            cfg.folds,
            data.len()
        )));
    }
    let (k, l) = kernels(&cfg.input_kernel, &cfg.output_kernel, &data)?;
    prepare_out(&args.out)?;

    let bandwidths: Vec<Option<f64>> = match &cfg.bandwidths {
        Some(b) => b.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let grid: Vec<GridPoint> = cfg
        .lambdas
        .iter()
        .flat_map(|&lam| bandwidths.iter().map(move |&bw| GridPoint::new(lam, bw)))
        .collect();
    let report = cross_validate(&data, k, l, &grid, cfg.folds, cfg.seed)?;

    let mut t = Table::new(["grid_index", "lambda", "bandwidth", "fold", "held_out_risk", "best"]);
    for (g, point) in report.grid.iter().enumerate() {
        let bw = point.bandwidth.or(cfg.input_kernel.bandwidth());
        for f in 0..cfg.folds {
            t.push([
                g.to_string(),
                num(point.lambda),
                opt_num(bw),
                f.to_string(),
                num(report.fold_errors[[g, f]]),
                u8::from(g == report.best).to_string(),
            ]);
        }
    }
    t.write(&args.out.join("cv.csv"))
}

fn gamma_grid(gammas: &[f64], relative: bool, model: &EmbeddingModel, penalty: Penalty) -> Result<Vec<f64>, CliError> {
    if !relative {
        return Ok(gammas.to_vec());
    }
    let gmax = SparseProblem::from_model(model, 0.0, penalty)?.gamma_max();
    Ok(gammas.iter().map(|g| g * gmax).collect())
}

pub fn run_sparsify(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: SparsifyConfig = load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let (penalty, opts) = cfg.validate()?;
    let (train, test) = load_data(&cfg.data, &config_dir(args), cfg.seed)?;
    let (k, l) = kernels(&cfg.input_kernel, &cfg.output_kernel, &train)?;
    prepare_out(&args.out)?;

    let model = fit(&train, k, l, cfg.lambda)?;
    let gammas = gamma_grid(&cfg.gammas, cfg.gamma_relative, &model, penalty)?;
    let rows = sparsity_sweep(&model, &test, &gammas, penalty, &opts)?;
    let mut t = Table::new([
        "gamma",
        "nnz_fraction",
        "row_occupancy",
        "kl_distance",
        "test_risk",
        "iterations",
    ]);
    for r in rows {
        t.push([
            num(r.gamma),
            num(r.nnz_fraction),
            num(r.row_occupancy),
            num(r.kl_distance),
            num(r.test_risk),
            r.iterations.to_string(),
        ]);
    }
    t.write(&args.out.join("sparsify.csv"))
}

pub fn run_compare(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: CompareConfig = load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let opts = cfg.validate()?;
    let (train, test) = load_data(&cfg.data, &config_dir(args), cfg.seed)?;
    if let Some(r) = cfg.ranks.iter().find(|&&r| r > train.len()) {
        return Err(CliError::Config(format!(
            "ranks: rank {r} exceeds {} training points",
            train.len()
        )));
    }
    let (k, l) = kernels(&cfg.input_kernel, &cfg.output_kernel, &train)?;
    prepare_out(&args.out)?;

    let model = fit(&train, k, l, cfg.lambda)?;
    let gammas = gamma_grid(&cfg.gammas, cfg.gamma_relative, &model, Penalty::EntrywiseL1)?;
    let lasso =
        sparsity_sweep(&model, &test, &gammas, Penalty::EntrywiseL1, &opts).map_err(|e| e.context("method lasso"))?;
    let chol = cholesky_sweep(&model, &test, &cfg.ranks).map_err(|e| e.context("method cholesky"))?;

    let mut t = Table::new(["method", "sparsity_level", "nnz_fraction", "kl_distance", "test_risk"]);
    for r in &lasso {
        t.push([
            "lasso".to_string(),
            num(r.gamma),
            num(r.nnz_fraction),
            num(r.kl_distance),
            num(r.test_risk),
        ]);
    }
    for r in &chol {
        t.push([
            "cholesky".to_string(),
            r.rank.to_string(),
            num(r.nnz_fraction),
            num(r.kl_distance),
            num(r.test_risk),
        ]);
    }
    t.write(&args.out.join("compare.csv"))
}

/// Write `rate.csv` (one row per run) and `rate_slope.csv`; returns the slope.
pub fn write_rate_outputs(out: &Path, results: &[RateResult]) -> Result<f64, CliError> {
    let slope = rate_slope(results)?;
    let mut t = Table::new(["n", "seed", "lambda", "excess", "max_entry_error"]);
    for r in results {
        t.push([
            r.n.to_string(),
            r.seed.to_string(),
            num(r.lambda_used),
            num(r.excess),
            num(r.max_entry_error),
        ]);
    }
    t.write(&out.join("rate.csv"))?;
    let mut s = Table::new(["slope"]);
    s.push([num(slope)]);
    s.write(&out.join("rate_slope.csv"))?;
    Ok(slope)
}

pub fn run_rate(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: RateConfig = load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let (dist, schedule) = cfg.validate()?;
    if cfg.n_grid.len() < 3 {
        return Err(CliError::Config(
            "n_grid: need at least 3 sample sizes to fit a slope".into(),
        ));
    }
    prepare_out(&args.out)?;
    let results = rate_experiment(&dist, &cfg.n_grid, &cfg.seeds(), schedule)?;
    let slope = write_rate_outputs(&args.out, &results)?;
    println!("slope = {slope}");
    Ok(())
}

pub fn run_pendulum(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg: PendulumRunConfig = load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let params = cfg.validate()?;
    prepare_out(&args.out)?;

    let train = collect_dataset(&params, cfg.n_train, cfg.seed)?.to_training_set()?;
    let (k, l) = kernels(&cfg.input_kernel, &cfg.output_kernel, &train)?;
    let model = fit(&train, k, l, cfg.lambda)?;
    let policy = policy_iteration(&model, &params, cfg.sweeps)?;
    let eval_seed = cfg.seed.wrapping_add(1);
    let learned = evaluate_policy(&policy, &params, cfg.episodes, cfg.horizon, eval_seed)?;
    let random = evaluate_policy(
        &RandomPolicy::new(&params),
        &params,
        cfg.episodes,
        cfg.horizon,
        eval_seed,
    )?;

    let mut t = Table::new(["policy", "mean_return"]);
    t.push(["learned".to_string(), num(learned)]);
    t.push(["random".to_string(), num(random)]);
    t.write(&args.out.join("pendulum.csv"))?;

    let mut v = Table::new(["index", "theta", "omega", "reward", "value", "greedy_torque"]);
    for (i, y) in train.ys().outer_iter().enumerate() {
        let s = State::from_features(y.as_slice().expect("row-major"));
        v.push([
            i.to_string(),
            num(s.theta),
            num(s.omega),
            num(reward(s)),
            num(policy.values()[i]),
            num(policy.greedy_torques()[i]),
        ]);
    }
    v.write(&args.out.join("values.csv"))?;

    let mut sw = Table::new(["sweep", "max_change"]);
    for (i, d) in policy.sweep_deltas().iter().enumerate() {
        sw.push([(i + 1).to_string(), num(*d)]);
    }
    sw.write(&args.out.join("sweeps.csv"))
}
