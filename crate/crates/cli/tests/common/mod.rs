#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::Command;

use nalgebra::DMatrix;

pub struct Status {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_with_env(args: &[&str], env: &[(&str, &str)]) -> Status {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fglasso"));
    cmd.args(args).env_remove("FGLASSO_OUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Status {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn run(args: &[&str]) -> Status {
    run_with_env(args, &[])
}

/// Observations with a `v1..vp` header.
pub fn write_dataset(path: &Path, x: &DMatrix<f64>) {
    let mut text = (1..=x.ncols()).map(|c| format!("v{c}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for row in x.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

pub fn read_matrix(path: &Path) -> DMatrix<f64> {
    let text = fs::read_to_string(path).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}
