//! KL-divergence arbitration weights between two embodiments' grasp models.
//!
//! Both closed forms are evaluated exactly as the arbitration law uses them:
//!
//! ```text
//! lambda_i = ln(s_h / s_r) + (s_r^2 + (m_r - m_h)^2) / (2 s_h^2) - 1/2
//! gamma    = 1/2 (tr(S_h^-1 S_r) + (m_h - m_r)^T S_h^-1 (m_h - m_r) - d + ln(|S_h| / |S_r|))
//! ```
//!
//! In textbook orientation these are `KL(R || H)`: the robot population is
//! integrated against the human one. Only the ordering and scale of the values
//! matter to the controller, so the printed orientation is kept throughout.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::POSE_DIM;
use crate::gaussian::{log_det, spd_factor};
use crate::intent::Combination;
use crate::model::GraspModel;

/// Which Gaussian summarizes a population when computing weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// The class for the target's most probable combination.
    PerTask,
    /// Prior-weighted moment-matched Gaussian over all classes.
    Pooled,
}

/// Optional rescaling of raw `lambda` before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaScaling {
    Raw,
    /// Divide by the mean of the active `lambda` values.
    UnitMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergenceConfig {
    pub source: WeightSource,
    /// Fall back to pooled statistics when a model lacks the requested class.
    pub fallback_pooled: bool,
    pub w_min: f64,
    pub w_max: f64,
    pub scaling: LambdaScaling,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            source: WeightSource::PerTask,
            fallback_pooled: true,
            w_min: 1e-3,
            w_max: 1e3,
            scaling: LambdaScaling::Raw,
        }
    }
}

/// Per-feature (`lambda`) and whole-hand (`gamma`) divergences plus the
/// clamped values the solver actually uses. Features with no counterpart in
/// the other embodiment carry `None` and are left out of the mimic penalty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrationWeights {
    pub lambda: Vec<Option<f64>>,
    pub gamma: f64,
    pub clamped_lambda: Vec<Option<f64>>,
    pub clamped_gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combination: Option<Combination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<WeightSource>,
}

impl ArbitrationWeights {
    /// Weights used verbatim (no clamping), e.g. for overrides.
    pub fn explicit(gamma: f64, lambda: Vec<f64>) -> Result<Self> {
        let lambda: Vec<Option<f64>> = lambda.into_iter().map(Some).collect();
        let w = Self {
            clamped_lambda: lambda.clone(),
            clamped_gamma: gamma,
            lambda,
            gamma,
            combination: None,
            source: None,
        };
        w.validate()?;
        Ok(w)
    }

    /// Uniform weights whose penalty coefficient `1/(gamma lambda_i)` equals
    /// `penalty` on every feature.
    pub fn uniform_penalty(d: usize, penalty: f64) -> Result<Self> {
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(Error::InvalidWeight(penalty));
        }
        Self::explicit(1.0, vec![1.0 / penalty; d])
    }

    pub fn dim(&self) -> usize {
        self.clamped_lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w > 0.0 && w.is_finite();
        if !ok(self.clamped_gamma) {
            return Err(Error::InvalidWeight(self.clamped_gamma));
        }
        if let Some(bad) = self.clamped_lambda.iter().flatten().find(|&&w| !ok(w)) {
            return Err(Error::InvalidWeight(*bad));
        }
        if self.lambda.len() != self.clamped_lambda.len() {
            return Err(Error::DimensionMismatch {
                context: "raw vs clamped lambda",
                expected: self.clamped_lambda.len(),
                actual: self.lambda.len(),
            });
        }
        Ok(())
    }

    /// `1/(gamma lambda_i)` per feature, zero for excluded features.
    pub fn penalty_coefficients(&self) -> Vec<f64> {
        self.clamped_lambda
            .iter()
            .map(|l| l.map_or(0.0, |l| 1.0 / (self.clamped_gamma * l)))
            .collect()
    }
}

#[derive(Deserialize)]
struct WeightsRepr {
    lambda: Vec<Option<f64>>,
    gamma: f64,
    clamped_lambda: Option<Vec<Option<f64>>>,
    clamped_gamma: Option<f64>,
    #[serde(default)]
    combination: Option<Combination>,
    #[serde(default)]
    source: Option<WeightSource>,
}

impl<'de> Deserialize<'de> for ArbitrationWeights {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = WeightsRepr::deserialize(deserializer)?;
        let w = ArbitrationWeights {
            clamped_lambda: repr.clamped_lambda.unwrap_or_else(|| repr.lambda.clone()),
            clamped_gamma: repr.clamped_gamma.unwrap_or(repr.gamma),
            lambda: repr.lambda,
            gamma: repr.gamma,
            combination: repr.combination,
            source: repr.source,
        };
        w.validate().map_err(serde::de::Error::custom)?;
        Ok(w)
    }
}

/// Mean and covariance of the class for `combination`.
pub fn marginal_stats(model: &GraspModel, combination: Combination) -> Result<(DVector<f64>, DMatrix<f64>)> {
    model
        .class_for(combination)
        .map(|c| (c.mean().clone(), c.covariance().clone()))
        .ok_or_else(|| Error::MissingCombination {
            model: model.embodiment().to_string(),
            combination: model.tasks().label(combination),
        })
}

/// Per-feature divergence between univariate normals given as `(mean, sigma)`.
pub fn kl_feature(h: (f64, f64), r: (f64, f64)) -> Result<f64> {
    let ((mu_h, s_h), (mu_r, s_r)) = (h, r);
    for s in [s_h, s_r] {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::NonPositiveSigma(s));
        }
    }
    let diff = mu_r - mu_h;
    Ok((s_h / s_r).ln() + (s_r * s_r + diff * diff) / (2.0 * s_h * s_h) - 0.5)
}

/// Whole-hand divergence between multivariate normals given as `(mean, covariance)`.
pub fn kl_hand(h: (&DVector<f64>, &DMatrix<f64>), r: (&DVector<f64>, &DMatrix<f64>)) -> Result<f64> {
    let ((mu_h, cov_h), (mu_r, cov_r)) = (h, r);
    let d = mu_h.len();
    for (what, len) in [
        ("robot mean", mu_r.len()),
        ("human covariance", cov_h.nrows()),
        ("robot covariance", cov_r.nrows()),
    ] {
        if len != d {
            return Err(Error::DimensionMismatch {
                context: what,
                expected: d,
                actual: len,
            });
        }
    }
    let chol_h = spd_factor(cov_h, "human population")?;
    let chol_r = spd_factor(cov_r, "robot population")?;
    if mu_h == mu_r && cov_h == cov_r {
        return Ok(0.0);
    }
    let trace = chol_h.solve(cov_r).trace();
    let diff = mu_h - mu_r;
    let quad = diff.dot(&chol_h.solve(&diff));
    Ok(0.5 * (trace + quad - d as f64 + log_det(&chol_h) - log_det(&chol_r)))
}

/// Index pairs `(left feature, right feature)` shared by two embodiments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureAlignment {
    pub pairs: Vec<(usize, usize)>,
}

impl FeatureAlignment {
    pub fn identity(d: usize) -> Self {
        Self {
            pairs: (0..d).map(|i| (i, i)).collect(),
        }
    }

    /// Same pairs seen from the other side.
    pub fn reversed(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }

    /// Identity for equal dimensions; otherwise the pose prefix plus the
    /// declared aperture pairs from `table`.
    pub fn resolve(left: &GraspModel, right: &GraspModel, table: Option<&AlignmentTable>) -> Result<Self> {
        if left.dim() == right.dim() {
            return Ok(Self::identity(left.dim()));
        }
        let incompatible = || Error::IncompatibleLayout {
            left: left.embodiment().to_string(),
            left_dim: left.dim(),
            right: right.embodiment().to_string(),
            right_dim: right.dim(),
        };
        if left.dim() < POSE_DIM || right.dim() < POSE_DIM {
            return Err(incompatible());
        }
        let apertures = table
            .and_then(|t| t.apertures_for(left.embodiment(), right.embodiment()))
            .ok_or_else(incompatible)?;
        let mut pairs: Vec<(usize, usize)> = (0..POSE_DIM).map(|i| (i, i)).collect();
        for (a, b) in apertures {
            let (l, r) = (POSE_DIM + a, POSE_DIM + b);
            if l >= left.dim() || r >= right.dim() {
                return Err(Error::Config(format!(
                    "aperture pair ({a}, {b}) out of range for `{}`/`{}`",
                    left.embodiment(),
                    right.embodiment()
                )));
            }
            pairs.push((l, r));
        }
        Ok(Self { pairs })
    }

    /// Maps a left-side vector into the right layout; unmapped right features
    /// take their value from `fill`.
    pub fn project(&self, left: &[f64], fill: &[f64]) -> Vec<f64> {
        let mut out = fill.to_vec();
        for &(l, r) in &self.pairs {
            out[r] = left[l];
        }
        out
    }
}

/// Declared aperture correspondences between embodiments with different
/// finger counts (finger indices, zero-based).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTable {
    pub pairs: Vec<AlignmentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub left: String,
    pub right: String,
    pub apertures: Vec<(usize, usize)>,
}

impl AlignmentTable {
    pub fn apertures_for(&self, left: &str, right: &str) -> Option<Vec<(usize, usize)>> {
        self.pairs.iter().find_map(|e| {
            if e.left == left && e.right == right {
                Some(e.apertures.clone())
            } else if e.left == right && e.right == left {
                Some(e.apertures.iter().map(|&(a, b)| (b, a)).collect())
            } else {
                None
            }
        })
    }
}

fn select(mean: &DVector<f64>, cov: &DMatrix<f64>, idx: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let n = idx.len();
    (
        DVector::from_fn(n, |i, _| mean[idx[i]]),
        DMatrix::from_fn(n, n, |i, j| cov[(idx[i], idx[j])]),
    )
}

fn population(
    model: &GraspModel,
    combination: Option<Combination>,
    config: &DivergenceConfig,
) -> Result<(DVector<f64>, DMatrix<f64>, WeightSource)> {
    match (config.source, combination) {
        (WeightSource::PerTask, Some(c)) => match marginal_stats(model, c) {
            Ok((m, s)) => Ok((m, s, WeightSource::PerTask)),
            Err(_) if config.fallback_pooled => {
                let (m, s) = model.pooled();
                Ok((m, s, WeightSource::Pooled))
            }
            Err(e) => Err(e),
        },
        (WeightSource::PerTask, None) if !config.fallback_pooled => Err(Error::Config(
            "per-task weights need a combination and pooled fallback is disabled".into(),
        )),
        _ => {
            let (m, s) = model.pooled();
            Ok((m, s, WeightSource::Pooled))
        }
    }
}

/// Arbitration weights for a robot model relative to a human model.
///
/// `lambda` is indexed by robot feature. With [`WeightSource::PerTask`] both
/// models must carry a class for `combination` (or pooled fallback applies).
pub fn arbitration_weights(
    human: &GraspModel,
    robot: &GraspModel,
    combination: Option<Combination>,
    alignment: &FeatureAlignment,
    config: &DivergenceConfig,
) -> Result<ArbitrationWeights> {
    if human.tasks() != robot.tasks() {
        return Err(Error::TaskSetMismatch {
            left: human.embodiment().to_string(),
            right: robot.embodiment().to_string(),
        });
    }
    if !(config.w_min > 0.0 && config.w_min <= config.w_max && config.w_max.is_finite()) {
        return Err(Error::Config(format!(
            "weight clamp range [{}, {}] is invalid",
            config.w_min, config.w_max
        )));
    }
    let (mu_h, cov_h, src_h) = population(human, combination, config)?;
    let (mu_r, cov_r, src_r) = population(robot, combination, config)?;
    let source = if src_h == WeightSource::Pooled || src_r == WeightSource::Pooled {
        // Mixed sources would compare unlike populations.
        WeightSource::Pooled
    } else {
        WeightSource::PerTask
    };
    let (mu_h, cov_h, mu_r, cov_r) = if source == WeightSource::Pooled && (src_h != src_r) {
        let (mh, ch) = human.pooled();
        let (mr, cr) = robot.pooled();
        (mh, ch, mr, cr)
    } else {
        (mu_h, cov_h, mu_r, cov_r)
    };

    let mut lambda = vec![None; robot.dim()];
    for &(h, r) in &alignment.pairs {
        let value = kl_feature((mu_h[h], cov_h[(h, h)].sqrt()), (mu_r[r], cov_r[(r, r)].sqrt()))?;
        lambda[r] = Some(value);
    }
    let h_idx: Vec<usize> = alignment.pairs.iter().map(|p| p.0).collect();
    let r_idx: Vec<usize> = alignment.pairs.iter().map(|p| p.1).collect();
    let (mh, ch) = select(&mu_h, &cov_h, &h_idx);
    let (mr, cr) = select(&mu_r, &cov_r, &r_idx);
    let gamma = kl_hand((&mh, &ch), (&mr, &cr))?;

    let scale = match config.scaling {
        LambdaScaling::Raw => 1.0,
        LambdaScaling::UnitMean => {
            let active: Vec<f64> = lambda.iter().flatten().copied().collect();
            let mean = active.iter().sum::<f64>() / active.len().max(1) as f64;
            if mean > 0.0 {
                1.0 / mean
            } else {
                1.0
            }
        }
    };
    let clamp = |v: f64| v.clamp(config.w_min, config.w_max);
    let weights = ArbitrationWeights {
        clamped_lambda: lambda.iter().map(|l| l.map(|v| clamp(v * scale))).collect(),
        clamped_gamma: clamp(gamma),
        lambda,
        gamma,
        combination: if source == WeightSource::PerTask {
            combination
        } else {
            None
        },
        source: Some(source),
    };
    weights.validate()?;
    Ok(weights)
}

/// Square divergence matrix between embodiments. Row `P` is the embodiment
/// performing the task, column `Q` the one providing input, so entry
/// `(P, Q)` evaluates `gamma` with Q in the human role and P in the robot role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlTable {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl KlTable {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row][col]
    }

    /// CSV with a header row and a leading id column; reals at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("P\\Q");
        for id in &self.ids {
            out.push(',');
            out.push_str(&csv_field(id));
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.values) {
            out.push_str(&csv_field(id));
            for v in row {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Pairwise `gamma` for a task combination across `models`.
///
/// Falls back to pooled statistics for models lacking the combination only
/// when `config.fallback_pooled` is set.
pub fn kl_table(
    models: &[&GraspModel],
    combination: Option<Combination>,
    alignments: Option<&AlignmentTable>,
    config: &DivergenceConfig,
) -> Result<KlTable> {
    if models.len() < 2 {
        return Err(Error::Config("a divergence table needs at least two models".into()));
    }
    let stats: Vec<(DVector<f64>, DMatrix<f64>)> = models
        .iter()
        .map(|m| population(m, combination, config).map(|(mu, cov, _)| (mu, cov)))
        .collect::<Result<_>>()?;
    let n = models.len();
    let mut values = vec![vec![0.0; n]; n];
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            let alignment = FeatureAlignment::resolve(models[q], models[p], alignments)?;
            let q_idx: Vec<usize> = alignment.pairs.iter().map(|x| x.0).collect();
            let p_idx: Vec<usize> = alignment.pairs.iter().map(|x| x.1).collect();
            let (mq, cq) = select(&stats[q].0, &stats[q].1, &q_idx);
            let (mp, cp) = select(&stats[p].0, &stats[p].1, &p_idx);
            values[p][q] = kl_hand((&mq, &cq), (&mp, &cp))?;
        }
    }
    Ok(KlTable {
        ids: models.iter().map(|m| m.embodiment().to_string()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianClass;
    use crate::intent::TaskSet;
    use proptest::prelude::*;

    #[test]
    fn feature_divergence_hand_values() {
        assert_eq!(kl_feature((0.0, 1.0), (0.0, 1.0)).unwrap(), 0.0);
        assert!((kl_feature((0.0, 1.0), (1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        // ln(1/2) + 4/2 - 1/2 and ln 2 + 1/8 - 1/2
        let forward = kl_feature((0.0, 1.0), (0.0, 2.0)).unwrap();
        let backward = kl_feature((0.0, 2.0), (0.0, 1.0)).unwrap();
        assert!((forward - (1.5 - 2f64.ln())).abs() < 1e-15);
        assert!((backward - (2f64.ln() - 0.375)).abs() < 1e-15);
        assert!((forward - 0.8069).abs() < 1e-4 && (backward - 0.3181).abs() < 1e-4);
        assert!(matches!(
            kl_feature((0.0, 0.0), (0.0, 1.0)),
            Err(Error::NonPositiveSigma(_))
        ));
        assert!(kl_feature((0.0, 1.0), (0.0, -1.0)).is_err());
    }

    #[test]
    fn hand_divergence_hand_values() {
        let i2 = DMatrix::identity(2, 2);
        let v = kl_hand(
            (&DVector::from_vec(vec![0.0, 0.0]), &i2),
            (&DVector::from_vec(vec![1.0, 0.0]), &i2),
        )
        .unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let m = DVector::from_vec(vec![0.4, -1.0, 2.0]);
        assert!(kl_hand((&m, &a), (&m, &a)).unwrap().abs() < 1e-12);
        assert!(kl_hand((&m, &a), (&DVector::zeros(2), &i2)).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert!(kl_hand((&DVector::zeros(2), &bad), (&DVector::zeros(2), &i2)).is_err());
    }

    #[test]
    fn alignment_requires_declaration_for_different_finger_counts() {
        let tasks = TaskSet::new(["use"]).unwrap();
        let make = |name: &str, d: usize| {
            GraspModel::new(
                name,
                tasks.clone(),
                vec![GaussianClass::new(Combination(1), 1.0, DVector::zeros(d), DMatrix::identity(d, d)).unwrap()],
            )
            .unwrap()
        };
        let human = make("human", 11);
        let gripper = make("two-finger", 8);
        assert!(matches!(
            FeatureAlignment::resolve(&human, &gripper, None),
            Err(Error::IncompatibleLayout { .. })
        ));
        let table = AlignmentTable {
            pairs: vec![AlignmentEntry {
                left: "two-finger".into(),
                right: "human".into(),
                apertures: vec![(0, 0), (1, 1)],
            }],
        };
        let a = FeatureAlignment::resolve(&human, &gripper, Some(&table)).unwrap();
        assert_eq!(a.pairs.len(), 8);
        assert_eq!(a.pairs[6], (6, 6));
        let w = arbitration_weights(&human, &gripper, Some(Combination(1)), &a, &DivergenceConfig::default()).unwrap();
        assert_eq!(w.lambda.len(), 8);
        assert!(w.lambda.iter().all(Option::is_some));
        let projected = a.project(&(0..11).map(|i| i as f64).collect::<Vec<_>>(), &[0.0; 8]);
        assert_eq!(projected, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn identical_models_give_clamped_floor_weights() {
        let tasks = TaskSet::new(["use"]).unwrap();
        let m = GraspModel::new(
            "h",
            tasks,
            vec![GaussianClass::new(Combination(1), 1.0, DVector::zeros(3), DMatrix::identity(3, 3) * 0.2).unwrap()],
        )
        .unwrap();
        let w = arbitration_weights(
            &m,
            &m,
            Some(Combination(1)),
            &FeatureAlignment::identity(3),
            &DivergenceConfig::default(),
        )
        .unwrap();
        assert!(w.gamma.abs() < 1e-12);
        assert!(w.lambda.iter().all(|l| l.unwrap().abs() < 1e-12));
        assert_eq!(w.clamped_gamma, 1e-3);
        assert!(w.clamped_lambda.iter().all(|l| *l == Some(1e-3)));
        assert_eq!(w.penalty_coefficients(), vec![1e6; 3]);
        assert_eq!(w.source, Some(WeightSource::PerTask));
    }

    #[test]
    fn override_files_without_clamped_values() {
        let w: ArbitrationWeights = serde_json::from_str(r#"{"gamma":2.0,"lambda":[0.5,null]}"#).unwrap();
        assert_eq!(w.clamped_gamma, 2.0);
        assert_eq!(w.penalty_coefficients(), vec![1.0, 0.0]);
        assert!(serde_json::from_str::<ArbitrationWeights>(r#"{"gamma":0.0,"lambda":[1.0]}"#).is_err());
    }

    #[test]
    fn csv_layout() {
        let t = KlTable {
            ids: vec!["a".into(), "b,c".into()],
            values: vec![vec![0.0, 0.5], vec![1.25, 0.0]],
        };
        assert_eq!(t.to_csv(), "P\\Q,a,\"b,c\"\na,0.0,0.5\n\"b,c\",1.25,0.0\n");
    }

    fn spd(entries: &[f64], d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_row_slice(d, d, &entries[..d * d]);
        &a * a.transpose() + DMatrix::identity(d, d) * 0.05
    }

    proptest! {
        #[test]
        fn one_dimensional_hand_equals_feature(
            mh in -3.0f64..3.0, mr in -3.0f64..3.0, sh in 0.05f64..4.0, sr in 0.05f64..4.0,
        ) {
            let g = kl_hand(
                (&DVector::from_element(1, mh), &DMatrix::from_element(1, 1, sh * sh)),
                (&DVector::from_element(1, mr), &DMatrix::from_element(1, 1, sr * sr)),
            ).unwrap();
            let l = kl_feature((mh, sh), (mr, sr)).unwrap();
            prop_assert!((g - l).abs() < 1e-12 * l.abs().max(1.0));
        }

        #[test]
        fn diagonal_hand_is_sum_of_features(
            mh in prop::collection::vec(-2.0f64..2.0, 4),
            mr in prop::collection::vec(-2.0f64..2.0, 4),
            sh in prop::collection::vec(0.1f64..3.0, 4),
            sr in prop::collection::vec(0.1f64..3.0, 4),
        ) {
            let ch = DMatrix::from_diagonal(&DVector::from_iterator(4, sh.iter().map(|s| s * s)));
            let cr = DMatrix::from_diagonal(&DVector::from_iterator(4, sr.iter().map(|s| s * s)));
            let g = kl_hand((&DVector::from_vec(mh.clone()), &ch), (&DVector::from_vec(mr.clone()), &cr)).unwrap();
            let sum: f64 = (0..4).map(|i| kl_feature((mh[i], sh[i]), (mr[i], sr[i])).unwrap()).sum();
            prop_assert!((g - sum).abs() < 1e-10 * sum.abs().max(1.0));
        }

        #[test]
        fn common_scale_leaves_feature_divergence_unchanged(
            sh in 0.05f64..4.0, sr in 0.05f64..4.0, c in 0.01f64..100.0,
        ) {
            let a = kl_feature((0.0, sh), (0.0, sr)).unwrap();
            let b = kl_feature((0.0, c * sh), (0.0, c * sr)).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn hand_divergence_is_nonnegative(
            eh in prop::collection::vec(-1.0f64..1.0, 9),
            er in prop::collection::vec(-1.0f64..1.0, 9),
            mh in prop::collection::vec(-2.0f64..2.0, 3),
            mr in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            let g = kl_hand(
                (&DVector::from_vec(mh), &spd(&eh, 3)),
                (&DVector::from_vec(mr), &spd(&er, 3)),
            ).unwrap();
            prop_assert!(g >= -1e-12);
        }
    }
}
