//! JSON shapes exchanged with clients.

use graspshare::divergence::ArbitrationWeights;
use graspshare::{Features, IntentVector, Mode, Solution, WorkspaceBounds};
use serde::{Deserialize, Serialize};

/// Bounds named by id from the registry, or given inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundsSpec {
    Id(String),
    Inline(WorkspaceBounds),
}

/// Body of `POST /solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBody {
    /// Robot model id.
    pub model: String,
    pub mode: Mode,
    /// Operator features in robot or human layout.
    #[serde(alias = "human")]
    pub features: Features,
    /// Explicit per-task intent; estimated from the human model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<IntentVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_override: Option<ArbitrationWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Body of `POST /intent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentBody {
    /// Human model id; defaults to the registry's human model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub features: Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentResponse {
    pub model: String,
    pub tasks: Vec<String>,
    pub intent: Vec<f64>,
    /// Indexed by combination bitmask.
    pub target: Vec<f64>,
}

/// Messages a client sends on `/session`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Inbound {
    Hello {
        model: String,
        mode: Mode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<BoundsSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    HandUpdate {
        seq: u64,
        features: Features,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        intent: Option<IntentVector>,
    },
    SetMode {
        mode: Mode,
    },
}

/// Messages the service sends on `/session`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Solution(SolutionMessage),
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMessage {
    pub seq: u64,
    pub mode: Mode,
    pub robot_features: Vec<f64>,
    pub p_h: Vec<f64>,
    pub p_r: Vec<f64>,
    /// Clamped per-feature weights (knitro only); `null` entries are unmapped features.
    pub lambda: Option<Vec<Option<f64>>>,
    /// Clamped whole-hand weight (knitro only).
    pub gamma: Option<f64>,
    pub intent_term: f64,
    pub mimic_term: f64,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SolutionMessage {
    pub fn new(seq: u64, s: &Solution) -> Self {
        Self {
            seq,
            mode: s.mode,
            robot_features: s.robot.clone(),
            p_h: s.p_h.clone(),
            p_r: s.p_r.clone(),
            lambda: s.weights.as_ref().map(|w| w.clamped_lambda.clone()),
            gamma: s.weights.as_ref().map(|w| w.clamped_gamma),
            intent_term: s.intent_term,
            mimic_term: s.mimic_term,
            objective: s.objective,
            warnings: s.solver_meta.warnings.clone(),
        }
    }
}
