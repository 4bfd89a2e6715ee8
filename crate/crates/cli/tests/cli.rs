use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_baryline")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(out: &str, key: &str) -> f64 {
    let line = out.lines().find_map(|l| l.strip_prefix(&format!("{key}="))).unwrap_or_else(|| panic!("no {key} in {out}"));
    line.trim().parse().unwrap()
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

const TWO_SQUARES: &str = r#"
[z]
lower = [0.0, 0.0]
upper = [1.0, 1.0]
resolution = 16

[[measure]]
box = { lower = [0.1, 0.1], upper = [0.3, 0.3] }
grid = { lower = [0.0, 0.0], upper = [1.0, 1.0], resolution = 16 }

[[measure]]
box = { lower = [0.6, 0.6], upper = [0.8, 0.8] }
grid = { lower = [0.0, 0.0], upper = [1.0, 1.0], resolution = 16 }
"#;

const TINY_THREE: &str = r#"
[z]
lower = [0.0, 0.0]
upper = [1.0, 1.0]
resolution = 3

[[measure]]
lambda = 0.2
points = [[0.1, 0.2], [0.7, 0.9]]
weights = [0.25, 0.75]

[[measure]]
lambda = 0.5
points = [[0.5, 0.5], [0.2, 0.8], [0.9, 0.1]]

[[measure]]
lambda = 0.3
dirac = [0.4, 0.6]
"#;

/// Sums the body of a density CSV and returns it with the declared mass.
fn csv_mass(path: &Path) -> (f64, f64, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "rows,cols,x0,y0,dx,dy,mass");
    let header: Vec<f64> = lines.next().unwrap().split(',').map(|t| t.parse().unwrap()).collect();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|t| t.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), header[0] as usize);
    assert!(rows.iter().all(|r| r.len() == header[1] as usize));
    let total: f64 = rows.iter().flatten().sum();
    (total, header[6], rows)
}

#[test]
fn single_population_with_target_prints_transport_cost() {
    let dir = TempDir::new().unwrap();
    write_config(
        &dir,
        "[z]\nlower = [0.0]\nupper = [1.0]\nresolution = 4\n\n[[measure]]\npoints = [[0.0], [1.0]]\n\n[target]\npoints = [[0.5], [2.0]]\n",
    );
    let o = run(dir.path(), &["lp-solve", "-c", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // monotone matching: (0.5² + 1²) / 2
    assert!((value(&stdout(&o), "ot_cost") - 0.625).abs() < 1e-12);
}

#[test]
fn interpolation_frame_moves_the_mean() {
    let dir = TempDir::new().unwrap();
    write_config(&dir, TWO_SQUARES);
    let o = run(dir.path(), &["interpolate", "-c", "run.toml", "--weights", "0.25"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let frame = dir.path().join("out/frame_0.25.csv");
    let (total, mass, rows) = csv_mass(&frame);
    assert!((total - mass).abs() <= 1e-9 && (mass - 1.0).abs() <= 1e-9);
    // the quantized squares have means 0.21875 and 0.71875 on each axis
    let (mut mx, mut my) = (0.0, 0.0);
    for (r, row) in rows.iter().enumerate() {
        for (c, w) in row.iter().enumerate() {
            mx += w * (c as f64 + 0.5) / 16.0;
            my += w * (r as f64 + 0.5) / 16.0;
        }
    }
    assert!((mx - 0.34375).abs() < 1e-9 && (my - 0.34375).abs() < 1e-9, "{mx} {my}");
    let pgm = fs::read(dir.path().join("out/frame_0.25.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
    assert!(pgm.contains(&255));
}

#[test]
fn oracle_check_reports_agreement() {
    let dir = TempDir::new().unwrap();
    write_config(&dir, TINY_THREE);
    let o = run(dir.path(), &["oracle-check", "-c", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("agree=true"));
    let (lp, dual, mm) = (value(&out, "lp_value"), value(&out, "dual_value"), value(&out, "multimarginal_value"));
    assert!((lp - mm).abs() <= 1e-7 && (lp - dual).abs() <= 1e-6 * lp);
}

#[test]
fn dual_solve_writes_the_iteration_log() {
    let dir = TempDir::new().unwrap();
    write_config(&dir, TWO_SQUARES);
    let o = run(dir.path(), &["dual-solve", "-c", "run.toml", "--localize", "minkowski"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(value(&out, "max_quadratic_term") <= 1e-3);
    let log = fs::read_to_string(dir.path().join("out/iterations.csv")).unwrap();
    assert!(log.starts_with("iter,phi,grad_inf,step\n"));
    let phis: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(phis.windows(2).all(|w| w[1] >= w[0]));
    let (total, mass, _) = csv_mass(&dir.path().join("out/nu.csv"));
    assert!((total - mass).abs() <= 1e-9 && (mass - 1.0).abs() <= 1e-9);
}

#[test]
fn identical_runs_give_identical_files() {
    let dir = TempDir::new().unwrap();
    write_config(&dir, TWO_SQUARES);
    for out in ["a", "b"] {
        let o = run(dir.path(), &["dual-solve", "-c", "run.toml", "--seed", "3", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["iterations.csv", "nu.csv", "nu.pgm", "nu.txt"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn iteration_limit_exits_with_two() {
    let dir = TempDir::new().unwrap();
    write_config(&dir, TWO_SQUARES);
    let o = run(dir.path(), &["dual-solve", "-c", "run.toml", "--max-iters", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(dir.path().join("out/nu.txt").exists());
}

#[test]
fn unknown_key_is_named() {
    let dir = TempDir::new().unwrap();
    write_config(&dir, &TINY_THREE.replace("lambda = 0.2", "lambda = 0.2\nlamda = 0.1"));
    let o = run(dir.path(), &["lp-solve", "-c", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));
}

#[test]
fn invalid_value_names_its_key() {
    let dir = TempDir::new().unwrap();
    write_config(
        &dir,
        "[z]\nlower = [0.0]\nupper = [1.0]\nresolution = 4\n\n[[measure]]\ngaussian = { mean = [0.5], sigma = 0.1 }\n",
    );
    let o = run(dir.path(), &["lp-solve", "-c", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("measure[0].grid"), "{}", stderr(&o));

    write_config(&dir, &TINY_THREE.replace("lambda = 0.5", "lambda = -0.5"));
    let o = run(dir.path(), &["lp-solve", "-c", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("measure[1].lambda"), "{}", stderr(&o));
}

#[test]
fn gaussian_oracle_prints_the_closed_form() {
    let dir = TempDir::new().unwrap();
    write_config(
        &dir,
        r#"
[z]
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
resolution = 4

[[measure]]
lambda = 0.5
gaussian = { mean = [0.0, 0.0], sigma = 0.1 }

[[measure]]
lambda = 0.5
gaussian = { mean = [1.0, 0.5], sigma = 0.3 }
"#,
    );
    let o = run(dir.path(), &["gaussian-oracle", "-c", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("mean=[0.5, 0.25]"), "{out}");
    assert!((value(&out, "sigma") - 0.2).abs() < 1e-12);
}

#[test]
fn minkowski_localization_keeps_the_midpoint_square() {
    let dir = TempDir::new().unwrap();
    write_config(&dir, TWO_SQUARES);
    let o = run(dir.path(), &["localize", "-c", "run.toml", "--localize", "minkowski"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cells = value(&stdout(&o), "cells");
    assert!(cells > 0.0 && cells < 256.0);
    let pts = fs::read_to_string(dir.path().join("out/support.csv")).unwrap();
    assert!(pts.lines().skip(1).any(|l| l == "0.46875,0.46875"), "{pts}");
}
