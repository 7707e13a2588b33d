//! The three controller formulations.
//!
//! * **Mimic**: the robot copies the operator, `R = clamp(H)`.
//! * **Intent-only**: `min 1/2 sum_k (P_k^R(R) - P_k^H)^2` over the workspace box.
//! * **KNITRO** (knowledge intent arbitration): the intent term plus an
//!   elastic mimic penalty `(1/gamma) sum_i (1/lambda_i) (R_i - H_i)^2`,
//!   with the weights derived from human/robot model divergence.
//!
//! The intent sums run over the robot model's class set. Target mass on
//! combinations the robot model has no class for only adds a constant, so it
//! is dropped from the optimized objective and reported in [`SolverMeta`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::WorkspaceBounds;
use crate::divergence::{arbitration_weights, ArbitrationWeights, DivergenceConfig, FeatureAlignment};
use crate::error::{Error, Result};
use crate::gaussian::log_sum_exp;
use crate::intent::{Combination, TargetVector};
use crate::model::GraspModel;
use crate::optim::{minimize_box, BoxMinimizerConfig};

/// Objective values closer than this are treated as ties between starts.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Mimic,
    IntentOnly,
    Knitro,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Mimic, Mode::IntentOnly, Mode::Knitro];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Mimic => "mimic",
            Mode::IntentOnly => "intent_only",
            Mode::Knitro => "knitro",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mimic" => Ok(Mode::Mimic),
            "intent_only" => Ok(Mode::IntentOnly),
            "knitro" => Ok(Mode::Knitro),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected mimic, intent_only or knitro)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub minimizer: BoxMinimizerConfig,
    pub divergence: DivergenceConfig,
    /// Extra uniformly drawn starts on top of `clamp(H)` and the class means.
    pub random_starts: usize,
    pub seed: u64,
    /// Record wall-clock time in [`SolverMeta`]; off keeps output reproducible.
    pub record_timing: bool,
}

#[derive(Debug, Clone)]
pub struct SolveRequest<'a> {
    pub mode: Mode,
    /// Operator features `H`, in the robot model's layout.
    pub human: Vec<f64>,
    /// Target vector `P^H` over all `2^m` combinations.
    pub target: TargetVector,
    pub robot_model: &'a GraspModel,
    /// Needed in knitro mode unless `weights_override` is given.
    pub human_model: Option<&'a GraspModel>,
    /// Human-to-robot feature map when the two models differ in dimension.
    pub alignment: Option<&'a FeatureAlignment>,
    pub bounds: &'a WorkspaceBounds,
    /// Used verbatim (no clamping) instead of model-derived weights.
    pub weights_override: Option<ArbitrationWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub iterations: usize,
    pub starts_tried: usize,
    pub converged: bool,
    #[serde(default)]
    pub wall_time_s: Option<f64>,
    /// Target mass on combinations without a robot class.
    pub dropped_target_mass: f64,
    /// `1/2 sum p_h^2` over those combinations; add to `objective` for the
    /// full-powerset value.
    pub constant_offset: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub mode: Mode,
    pub robot: Vec<f64>,
    pub objective: f64,
    pub intent_term: f64,
    pub mimic_term: f64,
    pub p_r: Vec<f64>,
    pub p_h: Vec<f64>,
    #[serde(default)]
    pub weights: Option<ArbitrationWeights>,
    pub solver_meta: SolverMeta,
}

impl Solution {
    /// Equality ignoring wall-clock timing.
    pub fn same_result(&self, other: &Solution) -> bool {
        let strip = |s: &Solution| {
            let mut s = s.clone();
            s.solver_meta.wall_time_s = None;
            s
        };
        strip(self) == strip(other)
    }
}

/// Warning attached when the target gives the robot nothing to match.
pub const WARN_NO_INTENT: &str = "no_intent_information";

/// Intent + elastic penalty objective with everything per-call precomputed.
struct Objective<'a> {
    model: &'a GraspModel,
    /// Target probability for each robot class, in class order.
    target: Vec<f64>,
    human: &'a [f64],
    /// `1/(gamma lambda_i)`, zero when there is no mimic penalty.
    penalty: Vec<f64>,
}

struct TargetSplit {
    per_class: Vec<f64>,
    dropped_mass: f64,
    constant_offset: f64,
}

fn split_target(model: &GraspModel, target: &TargetVector) -> Result<TargetSplit> {
    if target.len() != model.tasks().combinations() {
        return Err(Error::DimensionMismatch {
            context: "target vector vs robot task combinations",
            expected: model.tasks().combinations(),
            actual: target.len(),
        });
    }
    let per_class: Vec<f64> = model.classes().iter().map(|c| target.get(c.combination())).collect();
    let mut dropped_mass = 0.0;
    let mut constant_offset = 0.0;
    for (b, &p) in target.as_slice().iter().enumerate() {
        if model.class_for(Combination(b as u32)).is_none() {
            dropped_mass += p;
            constant_offset += 0.5 * p * p;
        }
    }
    Ok(TargetSplit {
        per_class,
        dropped_mass,
        constant_offset,
    })
}

impl<'a> Objective<'a> {
    fn posterior_into(&self, r: &[f64], lw: &mut Vec<f64>) {
        self.model.log_joint(r, lw);
        let norm = log_sum_exp(lw);
        for v in lw.iter_mut() {
            *v = (*v - norm).exp();
        }
    }

    fn terms(&self, r: &[f64]) -> (f64, f64) {
        let mut post = Vec::with_capacity(self.target.len());
        self.posterior_into(r, &mut post);
        let intent = 0.5
            * post
                .iter()
                .zip(&self.target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>();
        let mimic = r
            .iter()
            .zip(self.human)
            .zip(&self.penalty)
            .map(|((r, h), c)| c * (r - h) * (r - h))
            .sum();
        (intent, mimic)
    }

    /// Value and gradient. With `P_k = softmax_k(ln p_k + ln N_k(r))`,
    /// `dP_k/dr = P_k (g_k - sum_j P_j g_j)` where `g_k = -S_k^{-1}(r - m_k)`.
    fn value_grad(&self, r: &[f64], grad: &mut [f64]) -> f64 {
        let mut post = Vec::with_capacity(self.target.len());
        self.posterior_into(r, &mut post);
        let rv = DVector::from_column_slice(r);
        let d = r.len();
        let scores: Vec<Option<DVector<f64>>> = self
            .model
            .classes()
            .iter()
            .zip(&post)
            .map(|(c, &p)| (p > 0.0).then(|| c.log_density_gradient(&rv)))
            .collect();
        let mut mean_score = DVector::zeros(d);
        for (p, g) in post.iter().zip(&scores) {
            if let Some(g) = g {
                mean_score.axpy(*p, g, 1.0);
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut intent = 0.0;
        for ((p, t), g) in post.iter().zip(&self.target).zip(&scores) {
            let resid = p - t;
            intent += resid * resid;
            if let Some(g) = g {
                let coef = resid * p;
                for i in 0..d {
                    grad[i] += coef * (g[i] - mean_score[i]);
                }
            }
        }
        let mut mimic = 0.0;
        for i in 0..d {
            let diff = r[i] - self.human[i];
            mimic += self.penalty[i] * diff * diff;
            grad[i] += 2.0 * self.penalty[i] * diff;
        }
        0.5 * intent + mimic
    }
}

fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context: what,
            expected,
            actual,
        });
    }
    Ok(())
}

fn checked_penalty(model: &GraspModel, weights: &ArbitrationWeights) -> Result<Vec<f64>> {
    weights.validate()?;
    check_dim("arbitration weights vs robot dimension", model.dim(), weights.dim())?;
    Ok(weights.penalty_coefficients())
}

/// `1/2 sum_k (P_k^R(r) - P_k^H)^2` over the robot model's classes.
pub fn objective_intent(model: &GraspModel, p_h: &TargetVector, r: &[f64]) -> Result<f64> {
    model.check_dim(r)?;
    let split = split_target(model, p_h)?;
    let zeros = vec![0.0; r.len()];
    let obj = Objective {
        model,
        target: split.per_class,
        human: &zeros,
        penalty: zeros.clone(),
    };
    Ok(obj.terms(r).0)
}

/// Intent term plus `(1/gamma) sum_i (1/lambda_i)(r_i - h_i)^2` using the clamped weights.
pub fn objective_knitro(
    model: &GraspModel,
    p_h: &TargetVector,
    r: &[f64],
    h: &[f64],
    weights: &ArbitrationWeights,
) -> Result<f64> {
    model.check_dim(r)?;
    model.check_dim(h)?;
    let obj = Objective {
        model,
        target: split_target(model, p_h)?.per_class,
        human: h,
        penalty: checked_penalty(model, weights)?,
    };
    let (intent, mimic) = obj.terms(r);
    Ok(intent + mimic)
}

/// Analytic gradient of [`objective_knitro`] with respect to `r`.
pub fn gradient_knitro(
    model: &GraspModel,
    p_h: &TargetVector,
    r: &[f64],
    h: &[f64],
    weights: &ArbitrationWeights,
) -> Result<Vec<f64>> {
    model.check_dim(r)?;
    model.check_dim(h)?;
    let obj = Objective {
        model,
        target: split_target(model, p_h)?.per_class,
        human: h,
        penalty: checked_penalty(model, weights)?,
    };
    let mut grad = vec![0.0; r.len()];
    obj.value_grad(r, &mut grad);
    Ok(grad)
}

fn validate_request(req: &SolveRequest<'_>) -> Result<()> {
    let d = req.robot_model.dim();
    check_dim("human features vs robot dimension", d, req.human.len())?;
    check_dim("bounds vs robot dimension", d, req.bounds.dim())?;
    if req.human.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("human features must be finite".into()));
    }
    Ok(())
}

/// Mimic controller: `R = clamp(H)`; the intent term is reported, not optimized.
pub fn solve_mimic(req: &SolveRequest<'_>) -> Result<Solution> {
    validate_request(req)?;
    let started = Instant::now();
    let split = split_target(req.robot_model, &req.target)?;
    let robot = req.bounds.clamp(&req.human);
    let obj = Objective {
        model: req.robot_model,
        target: split.per_class,
        human: &req.human,
        penalty: vec![0.0; robot.len()],
    };
    let (intent, _) = obj.terms(&robot);
    Ok(Solution {
        mode: Mode::Mimic,
        p_r: req.robot_model.posterior(&robot)?.into(),
        p_h: req.target.as_slice().to_vec(),
        robot,
        objective: intent,
        intent_term: intent,
        mimic_term: 0.0,
        weights: None,
        solver_meta: SolverMeta {
            iterations: 0,
            starts_tried: 0,
            converged: true,
            wall_time_s: Some(started.elapsed().as_secs_f64()),
            dropped_target_mass: split.dropped_mass,
            constant_offset: split.constant_offset,
            warnings: Vec::new(),
        },
    })
}

/// Weights for knitro mode: the override if present, otherwise derived from
/// the human and robot models for the target's most probable combination.
pub fn resolve_weights(req: &SolveRequest<'_>, config: &DivergenceConfig) -> Result<ArbitrationWeights> {
    if let Some(w) = &req.weights_override {
        return Ok(w.clone());
    }
    let human = req.human_model.ok_or(Error::MissingWeights)?;
    let alignment = match req.alignment {
        Some(a) => a.clone(),
        None => FeatureAlignment::resolve(human, req.robot_model, None)?,
    };
    let combination = Some(req.target.argmax()).filter(|c| !c.is_empty());
    arbitration_weights(human, req.robot_model, combination, &alignment, config)
}

/// Solves a request in any mode. Intent-only and knitro run a projected
/// quasi-Newton minimization from every start in
/// `{clamp(H)} ∪ {clamp(mean_k)}` (plus optional seeded random starts) and
/// keep the best; ties within [`TIE_TOLERANCE`] go to the point closest to `H`.
pub fn solve(req: &SolveRequest<'_>, config: &SolverConfig) -> Result<Solution> {
    let mut solution = match req.mode {
        Mode::Mimic => solve_mimic(req)?,
        Mode::IntentOnly | Mode::Knitro => solve_optimized(req, config)?,
    };
    if !config.record_timing {
        solution.solver_meta.wall_time_s = None;
    }
    Ok(solution)
}

fn solve_optimized(req: &SolveRequest<'_>, config: &SolverConfig) -> Result<Solution> {
    validate_request(req)?;
    let started = Instant::now();
    let model = req.robot_model;
    let d = model.dim();
    let split = split_target(model, &req.target)?;
    let weights = match req.mode {
        Mode::Knitro => Some(resolve_weights(req, &config.divergence)?),
        _ => None,
    };
    let penalty = match &weights {
        Some(w) => checked_penalty(model, w)?,
        None => vec![0.0; d],
    };
    let mut warnings = Vec::new();
    let no_intent = split.per_class.iter().all(|&t| t == 0.0);
    if no_intent {
        warnings.push(WARN_NO_INTENT.to_string());
    }
    let objective = Objective {
        model,
        target: split.per_class,
        human: &req.human,
        penalty,
    };

    let h_clamped = req.bounds.clamp(&req.human);
    let (robot, iterations, starts_tried, converged) = if no_intent && req.mode == Mode::IntentOnly {
        (h_clamped, 0, 0, true)
    } else {
        let starts = start_points(req, config, &h_clamped);
        let mut best: Option<(Vec<f64>, f64, f64)> = None;
        let mut iterations = 0;
        let mut converged_best = false;
        for start in &starts {
            let result = minimize_box(
                |r, g| objective.value_grad(r, g),
                start,
                req.bounds.lower(),
                req.bounds.upper(),
                &config.minimizer,
            );
            iterations += result.iterations;
            let dist = distance(&result.x, &req.human);
            let better = match &best {
                None => true,
                Some((_, value, best_dist)) => {
                    result.value < value - TIE_TOLERANCE
                        || ((result.value - value).abs() <= TIE_TOLERANCE && dist < *best_dist)
                }
            };
            if better && result.value.is_finite() {
                converged_best = result.converged;
                best = Some((result.x, result.value, dist));
            }
        }
        let (x, _, _) = best.ok_or_else(|| Error::Config("objective not finite at any start".into()))?;
        (x, iterations, starts.len(), converged_best)
    };

    let (intent, mimic) = objective.terms(&robot);
    Ok(Solution {
        mode: req.mode,
        p_r: model.posterior(&robot)?.into(),
        p_h: req.target.as_slice().to_vec(),
        robot,
        objective: intent + mimic,
        intent_term: intent,
        mimic_term: mimic,
        weights,
        solver_meta: SolverMeta {
            iterations,
            starts_tried,
            converged,
            wall_time_s: Some(started.elapsed().as_secs_f64()),
            dropped_target_mass: split.dropped_mass,
            constant_offset: split.constant_offset,
            warnings,
        },
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn start_points(req: &SolveRequest<'_>, config: &SolverConfig, h_clamped: &[f64]) -> Vec<Vec<f64>> {
    let mut starts = vec![h_clamped.to_vec()];
    for class in req.robot_model.classes() {
        starts.push(req.bounds.clamp(class.mean().as_slice()));
    }
    if config.random_starts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 0..config.random_starts {
            let point = (0..h_clamped.len())
                .map(|i| {
                    let lo = req.bounds.lower()[i].max(h_clamped[i] - 1.0);
                    let hi = req.bounds.upper()[i].min(h_clamped[i] + 1.0);
                    if hi > lo {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    }
                })
                .collect();
            starts.push(point);
        }
    }
    starts
}
