#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graspshare::intent::{Combination, TaskSet};
use graspshare::{GaussianClass, GraspModel, WorkspaceBounds};
use nalgebra::{DMatrix, DVector};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graspshare"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Asserts failure with exactly one JSON line on stderr and returns it.
pub fn expect_error(out: &Output) -> serde_json::Value {
    assert!(!out.status.success(), "expected failure, stdout: {}", stdout(out));
    let err = stderr(out);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {err}");
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert!(v["error"].is_string() && v["message"].is_string());
    v
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn one_d(var: f64) -> GraspModel {
    GraspModel::new(
        "robot-1d",
        TaskSet::new(["use", "transfer"]).unwrap(),
        vec![
            GaussianClass::univariate(Combination(0b01), 0.5, 0.0, var).unwrap(),
            GaussianClass::univariate(Combination(0b10), 0.5, 2.0, var).unwrap(),
        ],
    )
    .unwrap()
}

pub fn hand(embodiment: &str, spread: f64, shift: f64) -> GraspModel {
    let d = 8;
    let tasks = TaskSet::new(["use", "transfer", "handover"]).unwrap();
    let mut c1 = DMatrix::<f64>::identity(d, d) * (0.02 * spread);
    c1[(0, 1)] = 0.004 * spread;
    c1[(1, 0)] = 0.004 * spread;
    let c2 = DMatrix::<f64>::identity(d, d) * (0.03 * spread);
    let c3 = DMatrix::<f64>::identity(d, d) * (0.025 * spread);
    let m1 = [0.4 + shift, 0.0, 0.1, 0.0, 1.2, 0.0, 0.6, 0.6];
    let m2 = [0.5, 0.1 + shift, 0.2, 1.5, 0.0, 0.3, 0.2, 0.3];
    let m3 = [0.45, 0.05, 0.3 + shift, 0.7, 0.6, 0.1, 0.8, 0.2];
    GraspModel::new(
        embodiment,
        tasks,
        vec![
            GaussianClass::new(Combination(0b101), 0.4, DVector::from_column_slice(&m1), c1).unwrap(),
            GaussianClass::new(Combination(0b010), 0.35, DVector::from_column_slice(&m2), c2).unwrap(),
            GaussianClass::new(Combination(0b001), 0.25, DVector::from_column_slice(&m3), c3).unwrap(),
        ],
    )
    .unwrap()
}

pub fn table_bounds() -> WorkspaceBounds {
    WorkspaceBounds::new(
        vec![-1.0, -1.0, 0.05, -4.0, -4.0, -4.0, 0.0, 0.0],
        vec![1.5, 1.0, 1.2, 4.0, 4.0, 4.0, 1.0, 1.0],
    )
    .unwrap()
}

pub fn frame(i: usize) -> Vec<f64> {
    let t = i as f64 / 99.0;
    vec![
        0.3 + 0.3 * t,
        0.15 - 0.2 * t,
        0.1 + 0.25 * t,
        1.2 * t,
        1.1 - 0.9 * t,
        0.2 * (6.0 * t).sin(),
        0.6 - 0.4 * t,
        0.3 + 0.3 * t,
    ]
}

/// Model, bounds and trajectory files for the 8-D hand fixtures.
pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub models: PathBuf,
    pub human: PathBuf,
    pub gripper: PathBuf,
    pub bounds: PathBuf,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let models = dir.path().join("models");
        std::fs::create_dir(&models).unwrap();
        let human = models.join("human.json");
        let gripper = models.join("gripper.json");
        graspshare::save_model(&hand("human", 1.6, 0.05), &human).unwrap();
        graspshare::save_model(&hand("gripper", 1.0, 0.0), &gripper).unwrap();
        let bounds = dir.path().join("table.json");
        std::fs::write(&bounds, serde_json::to_string(&table_bounds()).unwrap()).unwrap();
        Self {
            dir,
            models,
            human,
            gripper,
            bounds,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Writes a trajectory of frames `0..n` (no explicit intent).
    pub fn trajectory(&self, name: &str, n: usize) -> PathBuf {
        let mut text = String::from("{\"meta\":{\"task\":\"use\",\"operator\":\"op-7\"}}\n");
        for i in 0..n {
            text.push_str(&serde_json::json!({"t": 0.05 * i as f64, "features": frame(i)}).to_string());
            text.push('\n');
        }
        let path = self.path(name);
        std::fs::write(&path, text).unwrap();
        path
    }
}
