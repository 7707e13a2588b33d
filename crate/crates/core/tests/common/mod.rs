#![allow(dead_code)]

use graspshare::intent::{Combination, TaskSet};
use graspshare::{GaussianClass, GraspModel};
use nalgebra::{DMatrix, DVector};

pub fn model_1d(means: [f64; 2], var: f64) -> GraspModel {
    GraspModel::new(
        "robot-1d",
        TaskSet::new(["use", "transfer"]).unwrap(),
        vec![
            GaussianClass::univariate(Combination(0b01), 0.5, means[0], var).unwrap(),
            GaussianClass::univariate(Combination(0b10), 0.5, means[1], var).unwrap(),
        ],
    )
    .unwrap()
}

pub fn class(bits: u32, prior: f64, mean: &[f64], cov: &[f64]) -> GaussianClass {
    let d = mean.len();
    GaussianClass::new(
        Combination(bits),
        prior,
        DVector::from_column_slice(mean),
        DMatrix::from_row_slice(d, d, cov),
    )
    .unwrap()
}

/// Three full-covariance classes in the plane over two tasks.
pub fn model_2d() -> GraspModel {
    GraspModel::new(
        "robot-2d",
        TaskSet::new(["use", "transfer"]).unwrap(),
        vec![
            class(0b01, 0.3, &[-0.6, 0.4], &[0.20, 0.05, 0.05, 0.15]),
            class(0b10, 0.45, &[0.7, 0.2], &[0.25, -0.08, -0.08, 0.30]),
            class(0b11, 0.25, &[0.1, -0.7], &[0.18, 0.02, 0.02, 0.12]),
        ],
    )
    .unwrap()
}

/// Shared covariance in the plane, so posterior log-ratios are affine.
pub fn model_2d_shared() -> GraspModel {
    let cov = [0.3, 0.1, 0.1, 0.4];
    GraspModel::new(
        "robot-2d-shared",
        TaskSet::new(["use", "transfer"]).unwrap(),
        vec![
            class(0b01, 0.3, &[-0.5, 0.3], &cov),
            class(0b10, 0.4, &[0.6, 0.1], &cov),
            class(0b11, 0.3, &[0.0, -0.6], &cov),
        ],
    )
    .unwrap()
}

pub fn model_3d() -> GraspModel {
    GraspModel::new(
        "robot-3d",
        TaskSet::new(["use", "transfer", "handover"]).unwrap(),
        vec![
            class(
                0b001,
                0.4,
                &[-0.05, 0.02, 0.0],
                &[0.004, 0.001, 0.0, 0.001, 0.006, 0.0005, 0.0, 0.0005, 0.005],
            ),
            class(
                0b010,
                0.35,
                &[0.06, -0.04, 0.03],
                &[0.005, -0.001, 0.0, -0.001, 0.004, 0.0, 0.0, 0.0, 0.006],
            ),
            class(
                0b101,
                0.25,
                &[0.0, 0.07, -0.05],
                &[0.006, 0.0, 0.001, 0.0, 0.005, 0.0, 0.001, 0.0, 0.004],
            ),
        ],
    )
    .unwrap()
}

/// Two-finger gripper layout: pose plus two apertures, two classes.
pub fn model_hand(embodiment: &str, spread: f64, shift: f64) -> GraspModel {
    let d = 8;
    let mut c1 = DMatrix::<f64>::identity(d, d) * (0.02 * spread);
    c1[(0, 1)] = 0.004 * spread;
    c1[(1, 0)] = 0.004 * spread;
    let c2 = DMatrix::<f64>::identity(d, d) * (0.03 * spread);
    let m1 = DVector::from_column_slice(&[0.4 + shift, 0.0, 0.1, 0.0, 1.2, 0.0, 0.6, 0.6]);
    let m2 = DVector::from_column_slice(&[0.5, 0.1 + shift, 0.2, 1.5, 0.0, 0.3, 0.2, 0.3]);
    GraspModel::new(
        embodiment,
        TaskSet::new(["use", "transfer", "handover"]).unwrap(),
        vec![
            GaussianClass::new(Combination(0b101), 0.5, m1, c1).unwrap(),
            GaussianClass::new(Combination(0b010), 0.5, m2, c2).unwrap(),
        ],
    )
    .unwrap()
}

/// Combination bits, prior, mean, row-major inverse covariance, normaliser.
type DirectClass = (u32, f64, Vec<f64>, Vec<f64>, f64);

/// Independent plain-space posterior: explicit inverse, determinant and
/// exponentials instead of Cholesky factors and log-sum-exp.
pub struct DirectModel {
    classes: Vec<DirectClass>,
    d: usize,
}

impl DirectModel {
    pub fn new(model: &GraspModel) -> Self {
        let d = model.dim();
        let classes = model
            .classes()
            .iter()
            .map(|c| {
                let inv = c.covariance().clone().try_inverse().unwrap();
                let norm = 1.0 / (c.covariance().determinant() * (2.0 * std::f64::consts::PI).powi(d as i32)).sqrt();
                (
                    c.combination().bits(),
                    c.prior(),
                    c.mean().iter().copied().collect(),
                    inv.transpose().iter().copied().collect(),
                    norm,
                )
            })
            .collect();
        Self { classes, d }
    }

    pub fn posterior(&self, x: &[f64], out: &mut Vec<(u32, f64)>) {
        out.clear();
        let mut quads = Vec::with_capacity(self.classes.len());
        for (_, _, mean, inv, _) in &self.classes {
            let mut quad = 0.0;
            for i in 0..self.d {
                let di = x[i] - mean[i];
                for j in 0..self.d {
                    quad += di * inv[i * self.d + j] * (x[j] - mean[j]);
                }
            }
            quads.push(quad);
        }
        // Common factor exp(-qmin/2) cancels; keeps far points representable.
        let qmin = quads.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for ((bits, prior, _, _, norm), q) in self.classes.iter().zip(&quads) {
            let w = prior * norm * (-0.5 * (q - qmin)).exp();
            total += w;
            out.push((*bits, w));
        }
        for e in out.iter_mut() {
            e.1 /= total;
        }
    }

    /// Intent term over the class set plus an explicit penalty sum.
    pub fn objective(
        &self,
        x: &[f64],
        target: &[f64],
        h: &[f64],
        penalty: &[f64],
        scratch: &mut Vec<(u32, f64)>,
    ) -> f64 {
        self.posterior(x, scratch);
        let mut intent = 0.0;
        for &(bits, p) in scratch.iter() {
            let t = target[bits as usize];
            intent += (p - t) * (p - t);
        }
        let mut mimic = 0.0;
        for i in 0..self.d {
            mimic += penalty[i] * (x[i] - h[i]) * (x[i] - h[i]);
        }
        0.5 * intent + mimic
    }
}

/// Exhaustive grid minimum of `f` over the box at the given step (endpoints included).
pub fn grid_minimum(lower: &[f64], upper: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> (f64, Vec<f64>) {
    let d = lower.len();
    let counts: Vec<usize> = (0..d)
        .map(|i| ((upper[i] - lower[i]) / step).round() as usize + 1)
        .collect();
    let mut idx = vec![0usize; d];
    let mut x = lower.to_vec();
    let mut best = (f64::INFINITY, x.clone());
    loop {
        for i in 0..d {
            x[i] = (lower[i] + idx[i] as f64 * step).min(upper[i]);
        }
        let v = f(&x);
        if v < best.0 {
            best = (v, x.clone());
        }
        let mut axis = 0;
        loop {
            if axis == d {
                return best;
            }
            idx[axis] += 1;
            if idx[axis] < counts[axis] {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Central finite-difference gradient.
pub fn central_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * step);
    }
    g
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
