//! Box-constrained minimization: projected L-BFGS with an active-set mask
//! and Armijo backtracking along the projection arc.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxMinimizerConfig {
    pub max_iters: usize,
    /// Stop once the infinity norm of the projected gradient step drops below this.
    pub pg_tol: f64,
    /// Number of curvature pairs kept.
    pub memory: usize,
}

impl Default for BoxMinimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            pg_tol: 1e-8,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max_i |P(x - g)_i - x_i|`, zero exactly at a KKT point of the box problem.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&x, &g), (&l, &u))| ((x - g).clamp(l, u) - x).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0` (projected
/// into the box first). `f` writes the gradient into its second argument and
/// returns the value.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], config: &BoxMinimizerConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);

    let mut free = vec![true; n];
    let mut d = vec![0.0; n];
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut alphas = vec![0.0; config.memory];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iters {
        if !fx.is_finite() {
            break;
        }
        if projected_gradient_norm(&x, &g, lower, upper) < config.pg_tol {
            converged = true;
            break;
        }
        for i in 0..n {
            free[i] = !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0));
        }

        // Two-loop recursion restricted to the free variables.
        for i in 0..n {
            d[i] = if free[i] { g[i] } else { 0.0 };
        }
        let masked_dot = |a: &[f64], b: &[f64]| -> f64 { (0..n).filter(|&i| free[i]).map(|i| a[i] * b[i]).sum() };
        for (j, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * masked_dot(s, &d);
            alphas[j] = a;
            for i in 0..n {
                if free[i] {
                    d[i] -= a * y[i];
                }
            }
        }
        if let Some((s, y, _)) = history.back() {
            let yy = masked_dot(y, y);
            if yy > 0.0 {
                let scale = masked_dot(s, y) / yy;
                if scale > 0.0 {
                    d.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        for (j, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * masked_dot(y, &d);
            for i in 0..n {
                if free[i] {
                    d[i] += s[i] * (alphas[j] - b);
                }
            }
        }
        d.iter_mut().for_each(|v| *v = -*v);

        let mut slope = dot(&g, &d);
        if slope.is_nan() || slope >= 0.0 {
            history.clear();
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
            slope = dot(&g, &d);
            if slope.is_nan() || slope >= 0.0 {
                break;
            }
        }

        let mut t = if history.is_empty() {
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (1.0 / dmax).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        let mut fn_ = fx;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                xn[i] = x[i] + t * d[i];
            }
            project(&mut xn, lower, upper);
            let mut moved = false;
            let mut decrease = 0.0;
            for i in 0..n {
                let s = xn[i] - x[i];
                moved |= s != 0.0;
                decrease += g[i] * s;
            }
            if !moved {
                break;
            }
            fn_ = f(&xn, &mut gn);
            evaluations += 1;
            if fn_.is_finite() && fn_ <= fx + ARMIJO * decrease {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        }

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        fx = fn_;
    }

    if !converged && fx.is_finite() {
        converged = projected_gradient_norm(&x, &g, lower, upper) < config.pg_tol;
    }
    Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
        converged,
    }
}
