//! Smoke tests for the `cme` binary: outputs, exit codes and CSV shape.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cme::cli::write_rate_outputs;
use cme::ratecheck::RateResult;
use serde_json::json;

fn cme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cme")).args(args).output().unwrap()
}

fn run(cmd: &str, cfg: &Path, out: &Path) -> Output {
    cme(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec(&value).unwrap()).unwrap();
    p
}

fn write_small_dataset(dir: &Path) {
    std::fs::write(
        dir.join("data.csv"),
        "x0,x1,y0\n0.0,0.1,1.0\n0.5,-0.3,0.2\n1.0,0.7,-0.4\n-0.8,0.2,0.9\n0.3,0.3,0.0\n",
    )
    .unwrap();
}

fn read(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.ends_with('\n'), "{} lacks a final newline", path.display());
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fit_writes_summary_and_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    write_small_dataset(dir.path());
    let cfg = write_config(dir.path(), "fit.json", json!({"dataset": "data.csv", "lambda": 0.1}));
    let out = dir.path().join("out");
    let o = run("fit", &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read(&out.join("summary.csv"));
    assert_eq!(header[0], "n");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "5");
    let ok = header.iter().position(|h| h == "bound_ok").unwrap();
    assert_eq!(rows[0][ok], "true");
    let (header, rows) = read(&out.join("coefficients.csv"));
    assert_eq!((header.len(), rows.len()), (5, 5));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    write_small_dataset(dir.path());
    let out = dir.path().join("out");

    let cfg = write_config(dir.path(), "zero.json", json!({"dataset": "data.csv", "lambda": 0.0}));
    let o = run("fit", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda"), "{}", stderr(&o));

    let cfg = write_config(
        dir.path(),
        "missing.json",
        json!({"dataset": "nope.csv", "lambda": 0.1}),
    );
    assert_eq!(run("fit", &cfg, &out).status.code(), Some(2));

    let cfg = write_config(
        dir.path(),
        "unknown.json",
        json!({"dataset": "data.csv", "lambda": 0.1, "lamda": 1}),
    );
    let o = run("fit", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));

    assert_eq!(run("fit", &dir.path().join("absent.json"), &out).status.code(), Some(2));
    assert_eq!(cme(&["frobnicate"]).status.code(), Some(2));

    let cfg = write_config(
        dir.path(),
        "cv.json",
        json!({"dataset": "data.csv", "lambdas": [0.1], "folds": 9}),
    );
    assert_eq!(run("cv", &cfg, &out).status.code(), Some(2));

    let cfg = write_config(
        dir.path(),
        "sp.json",
        json!({"data": {"kind": "csv", "train": "data.csv"}, "lambda": 0.1, "gammas": [0.1], "penalty": "l7"}),
    );
    let o = run("sparsify", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("penalty"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "rate.json", json!({"n_grid": [10, 20], "replicates": 2}));
    assert_eq!(run("rate", &cfg, &out).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // identical inputs under a linear kernel make K singular; a negligible ridge cannot fix it
    std::fs::write(dir.path().join("dup.csv"), "x0,y0\n1,1\n1,2\n1,3\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "fit.json",
        json!({"dataset": "dup.csv", "lambda": 1e-300, "input_kernel": {"kind": "linear"}}),
    );
    let o = run("fit", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn cv_single_point_marks_row_zero() {
    let dir = tempfile::tempdir().unwrap();
    write_small_dataset(dir.path());
    let cfg = write_config(
        dir.path(),
        "cv.json",
        json!({"dataset": "data.csv", "lambdas": [0.1], "folds": 2, "seed": 1}),
    );
    let out = dir.path().join("out");
    let o = run("cv", &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read(&out.join("cv.csv"));
    assert_eq!(
        header,
        ["grid_index", "lambda", "bandwidth", "fold", "held_out_risk", "best"]
    );
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[5] == "1"));
}

#[test]
fn rate_shape_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rate.json",
        json!({"n_grid": [30, 60, 120], "replicates": 4, "seed": 2}),
    );
    let out = dir.path().join("out");
    let o = run("rate", &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read(&out.join("rate.csv"));
    assert_eq!(header, ["n", "seed", "lambda", "excess", "max_entry_error"]);
    assert_eq!(rows.len(), 12);
    let (header, slope) = read(&out.join("rate_slope.csv"));
    assert_eq!(header, ["slope"]);
    assert_eq!(slope.len(), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("slope"));

    let other = dir.path().join("other");
    let o = cme(&[
        "rate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        other.to_str().unwrap(),
        "--seed",
        "77",
    ]);
    assert!(o.status.success());
    let (_, rows2) = read(&other.join("rate.csv"));
    assert_eq!(rows2[0][1], "77");
    assert_ne!(rows, rows2);
}

#[test]
fn rate_slope_of_exact_inverse_n_data() {
    let dir = tempfile::tempdir().unwrap();
    let results: Vec<RateResult> = [10usize, 100, 1000, 10_000]
        .iter()
        .flat_map(|&n| {
            (0..3).map(move |seed| RateResult {
                n,
                seed,
                lambda_used: 1.0,
                excess: 2.5 / n as f64,
                max_entry_error: 0.0,
            })
        })
        .collect();
    let slope = write_rate_outputs(dir.path(), &results).unwrap();
    assert!((slope + 1.0).abs() <= 1e-6, "{slope}");
    let (_, rows) = read(&dir.path().join("rate.csv"));
    assert_eq!(rows.len(), 12);
}

#[test]
fn compare_recovers_dense_solution_at_the_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cmp.json",
        json!({"data": {"kind": "pendulum", "n_train": 30, "n_test": 30}, "lambda": 0.05,
               "gammas": [0.0], "ranks": [30], "seed": 1}),
    );
    let out = dir.path().join("out");
    let o = run("compare", &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read(&out.join("compare.csv"));
    assert_eq!(
        header,
        ["method", "sparsity_level", "nnz_fraction", "kl_distance", "test_risk"]
    );
    assert_eq!(
        rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(),
        ["lasso", "cholesky"]
    );
    for r in &rows {
        let kl: f64 = r[3].parse().unwrap();
        assert!(kl <= 1e-6, "{} kl {kl}", r[0]);
    }
}

#[test]
fn pendulum_and_sparsify_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "pend.json",
        json!({"n_train": 50, "sweeps": 5, "episodes": 4, "horizon": 10, "pendulum": {"torque_levels": 5}}),
    );
    let out = dir.path().join("out");
    let o = run("pendulum", &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read(&out.join("pendulum.csv"));
    assert_eq!(
        rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(),
        ["learned", "random"]
    );
    assert_eq!(read(&out.join("values.csv")).1.len(), 50);
    assert_eq!(read(&out.join("sweeps.csv")).1.len(), 5);

    let cfg = write_config(
        dir.path(),
        "sp.json",
        json!({"data": {"kind": "pendulum", "n_train": 25, "n_test": 25}, "lambda": 0.05,
               "gammas": [0.0, 0.1, 1.0], "gamma_relative": true, "penalty": "col_group"}),
    );
    let o = run("sparsify", &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read(&out.join("sparsify.csv"));
    assert_eq!(
        header,
        [
            "gamma",
            "nnz_fraction",
            "row_occupancy",
            "kl_distance",
            "test_risk",
            "iterations"
        ]
    );
    // gamma = gamma_max zeroes the solution
    assert_eq!(rows[2][1], "0");
}
