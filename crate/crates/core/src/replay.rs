//! Per-frame solving and trajectory replay.
//!
//! [`FrameContext`] is the single path from an operator frame (features plus
//! an optional explicit intent) to a [`Solution`]; the CLI replay and the live
//! service both go through it, which is what keeps their outputs identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::WorkspaceBounds;
use crate::controllers::{resolve_weights, solve, Mode, Solution, SolveRequest, SolverConfig};
use crate::divergence::{AlignmentTable, ArbitrationWeights, FeatureAlignment};
use crate::error::{Error, Result};
use crate::feature::Features;
use crate::intent::{estimate_intent, powerset_target, Combination, IntentVector, TargetVector};
use crate::model::GraspModel;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything needed to turn operator frames into solutions for one robot.
#[derive(Debug, Clone)]
pub struct FrameContext<'a> {
    pub robot_model: &'a GraspModel,
    pub human_model: Option<&'a GraspModel>,
    /// Human-to-robot feature map; identity when dimensions agree.
    pub alignment: Option<FeatureAlignment>,
    pub bounds: &'a WorkspaceBounds,
    pub weights_override: Option<ArbitrationWeights>,
    pub config: SolverConfig,
}

/// An operator frame resolved into robot-layout features and a target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedFrame {
    pub human: Vec<f64>,
    pub target: TargetVector,
}

impl<'a> FrameContext<'a> {
    pub fn new(
        robot_model: &'a GraspModel,
        human_model: Option<&'a GraspModel>,
        bounds: &'a WorkspaceBounds,
        alignments: Option<&AlignmentTable>,
        config: SolverConfig,
    ) -> Result<Self> {
        if bounds.dim() != robot_model.dim() {
            return Err(Error::DimensionMismatch {
                context: "bounds vs robot dimension",
                expected: robot_model.dim(),
                actual: bounds.dim(),
            });
        }
        let alignment = match human_model {
            Some(h) => {
                if h.tasks() != robot_model.tasks() {
                    return Err(Error::TaskSetMismatch {
                        left: h.embodiment().to_string(),
                        right: robot_model.embodiment().to_string(),
                    });
                }
                Some(FeatureAlignment::resolve(h, robot_model, alignments)?)
            }
            None => None,
        };
        Ok(Self {
            robot_model,
            human_model,
            alignment,
            bounds,
            weights_override: None,
            config,
        })
    }

    /// Maps frame features into robot layout and builds the target vector,
    /// estimating intent from the human model when none is supplied.
    pub fn resolve(&self, features: &[f64], intent: Option<&IntentVector>) -> Result<ResolvedFrame> {
        let robot_dim = self.robot_model.dim();
        let human_dim = self.human_model.map(GraspModel::dim);
        let human = if features.len() == robot_dim {
            features.to_vec()
        } else if Some(features.len()) == human_dim {
            let alignment = self.alignment.as_ref().expect("alignment resolved with human model");
            let (fill, _) = self.robot_model.pooled();
            alignment.project(features, fill.as_slice())
        } else {
            return Err(Error::DimensionMismatch {
                context: "frame features vs robot dimension",
                expected: robot_dim,
                actual: features.len(),
            });
        };
        let intent = match intent {
            Some(p) => p.clone(),
            None => {
                let model = self
                    .human_model
                    .ok_or_else(|| Error::Config("frame has no intent and no human model is configured".into()))?;
                if features.len() != model.dim() {
                    return Err(Error::DimensionMismatch {
                        context: "frame features vs human model dimension",
                        expected: model.dim(),
                        actual: features.len(),
                    });
                }
                estimate_intent(model, features)?
            }
        };
        let target = powerset_target(self.robot_model.tasks(), &intent)?;
        Ok(ResolvedFrame { human, target })
    }

    /// Combination whose per-task statistics set the knitro weights.
    pub fn weight_key(target: &TargetVector) -> Option<Combination> {
        Some(target.argmax()).filter(|c| !c.is_empty())
    }

    fn request(&self, mode: Mode, frame: &ResolvedFrame, weights: Option<ArbitrationWeights>) -> SolveRequest<'_> {
        SolveRequest {
            mode,
            human: frame.human.clone(),
            target: frame.target.clone(),
            robot_model: self.robot_model,
            human_model: self.human_model,
            alignment: self.alignment.as_ref(),
            bounds: self.bounds,
            weights_override: weights.or_else(|| self.weights_override.clone()),
        }
    }

    /// Knitro weights for a resolved frame (override if configured).
    pub fn weights_for(&self, frame: &ResolvedFrame) -> Result<ArbitrationWeights> {
        resolve_weights(&self.request(Mode::Knitro, frame, None), &self.config.divergence)
    }

    /// Solves with precomputed weights (e.g. from a cache); `None` derives them.
    pub fn solve_resolved(
        &self,
        mode: Mode,
        frame: &ResolvedFrame,
        weights: Option<ArbitrationWeights>,
    ) -> Result<Solution> {
        let weights = if mode == Mode::Knitro { weights } else { None };
        solve(&self.request(mode, frame, weights), &self.config)
    }

    pub fn solve_frame(&self, mode: Mode, features: &[f64], intent: Option<&IntentVector>) -> Result<Solution> {
        let frame = self.resolve(features, intent)?;
        self.solve_resolved(mode, &frame, None)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub features: Features,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<IntentVector>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub frames: Vec<Frame>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TrajectoryLine {
    Meta { meta: TrajectoryMeta },
    Frame(Frame),
}

impl Trajectory {
    /// Parses JSON-Lines frames. An optional `{"meta": {...}}` line may carry
    /// the task label and operator id.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut traj = Trajectory::default();
        let mut dim: Option<usize> = None;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Dataset { line: line_no, message };
            let parsed: TrajectoryLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            match parsed {
                TrajectoryLine::Meta { meta } => traj.meta = meta,
                TrajectoryLine::Frame(frame) => {
                    if !frame.t.is_finite() {
                        return Err(err("timestamp must be finite".into()));
                    }
                    if let Some(prev) = traj.frames.last() {
                        if frame.t <= prev.t {
                            return Err(err(format!("timestamp {} does not increase past {}", frame.t, prev.t)));
                        }
                    }
                    let d = frame.features.to_vec().len();
                    match dim {
                        None => dim = Some(d),
                        Some(expected) if expected != d => {
                            return Err(err(format!("feature dimension {d} differs from {expected}")));
                        }
                        Some(_) => {}
                    }
                    traj.frames.push(frame);
                }
            }
        }
        Ok(traj)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub seq: usize,
    pub t: f64,
    pub solution: Solution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub frames: usize,
    /// Distance travelled by the robot position coordinates.
    pub path_length: f64,
    pub mean_objective: f64,
    pub max_objective: f64,
    pub mean_wall_time_s: Option<f64>,
    /// Whether the final frame's most probable robot combination matches the target's.
    pub final_task_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub robot_embodiment: String,
    pub meta: TrajectoryMeta,
    pub summary: ReplaySummary,
    pub frames: Vec<FrameResult>,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Length of the polyline through the first (up to three) coordinates.
pub fn path_length(points: &[&[f64]]) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let k = w[0].len().min(3);
            (0..k).map(|i| (w[1][i] - w[0][i]).powi(2)).sum::<f64>().sqrt()
        })
        .sum()
}

/// Runs every frame through one controller, in order.
pub fn replay(traj: &Trajectory, ctx: &FrameContext<'_>, mode: Mode) -> Result<ReplayReport> {
    let mut frames = Vec::with_capacity(traj.frames.len());
    for (seq, frame) in traj.frames.iter().enumerate() {
        let solution = ctx
            .solve_frame(mode, &frame.features.to_vec(), frame.intent.as_ref())
            .map_err(|e| Error::Dataset {
                line: seq + 1,
                message: e.to_string(),
            })?;
        frames.push(FrameResult {
            seq,
            t: frame.t,
            solution,
        });
    }
    let n = frames.len();
    let objectives: Vec<f64> = frames.iter().map(|f| f.solution.objective).collect();
    let points: Vec<&[f64]> = frames.iter().map(|f| f.solution.robot.as_slice()).collect();
    let times: Option<Vec<f64>> = frames.iter().map(|f| f.solution.solver_meta.wall_time_s).collect();
    let summary = ReplaySummary {
        frames: n,
        path_length: path_length(&points),
        mean_objective: if n > 0 {
            objectives.iter().sum::<f64>() / n as f64
        } else {
            0.0
        },
        max_objective: objectives.iter().copied().fold(0.0, f64::max),
        mean_wall_time_s: times
            .filter(|t| !t.is_empty())
            .map(|t| t.iter().sum::<f64>() / t.len() as f64),
        final_task_match: frames
            .last()
            .is_some_and(|f| argmax(&f.solution.p_r) == argmax(&f.solution.p_h)),
    };
    Ok(ReplayReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode,
        robot_embodiment: ctx.robot_model.embodiment().to_string(),
        meta: traj.meta.clone(),
        summary,
        frames,
    })
}
