//! Fitting grasp models from labeled demonstrations.
//!
//! Each distinct task combination in the data gets one Gaussian class.
//! Responsibilities start from the labels (a sample labeled `b` belongs
//! entirely to class `b`) and are then refined with soft EM, so samples may
//! end up partially explained by classes other than their label.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{unwrap_rotation_toward, Features, POSE_DIM};
use crate::gaussian::{log_sum_exp, GaussianClass};
use crate::intent::{Combination, TaskSet};
use crate::model::{FitMeta, GraspModel};

/// Label used in datasets for samples that satisfy no task.
pub const NONE_LABEL: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Added to every covariance diagonal after each M-step.
    pub eps_cov: f64,
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            eps_cov: 1e-6,
            tol: 1e-8,
            max_iters: 200,
        }
    }
}

/// One labeled demonstration, already resolved against a [`TaskSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub embodiment: String,
    pub combination: Combination,
    pub features: Vec<f64>,
    pub trial_id: String,
    pub weight: f64,
}

impl Demonstration {
    pub fn new(embodiment: impl Into<String>, combination: Combination, features: Vec<f64>) -> Self {
        Self {
            embodiment: embodiment.into(),
            combination,
            features,
            trial_id: String::new(),
            weight: 1.0,
        }
    }
}

struct Params {
    classes: Vec<GaussianClass>,
}

/// Fits one Gaussian class per labeled combination with label-seeded soft EM.
pub fn fit_em(tasks: &TaskSet, data: &[Demonstration], config: &FitConfig) -> Result<GraspModel> {
    if !(config.eps_cov > 0.0 && config.eps_cov.is_finite()) {
        return Err(Error::Config(format!(
            "eps_cov must be positive, got {}",
            config.eps_cov
        )));
    }
    let Some(first) = data.first() else {
        return Err(Error::NoDemonstrations);
    };
    let d = first.features.len();
    if d == 0 {
        return Err(Error::Config("features must have at least one dimension".into()));
    }
    for (i, demo) in data.iter().enumerate() {
        if demo.features.len() != d {
            return Err(Error::DimensionMismatch {
                context: "demonstration features",
                expected: d,
                actual: demo.features.len(),
            });
        }
        if demo.embodiment != first.embodiment {
            return Err(Error::Config(format!(
                "demonstration {i} is for `{}` but the dataset started with `{}`",
                demo.embodiment, first.embodiment
            )));
        }
        if !(demo.weight >= 0.0 && demo.weight.is_finite()) {
            return Err(Error::Config(format!("demonstration {i} has weight {}", demo.weight)));
        }
        if !tasks.contains(demo.combination) {
            return Err(Error::Config(format!(
                "demonstration {i} has combination {} outside the task set",
                demo.combination.bits()
            )));
        }
        if demo.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("demonstration {i} has non-finite features")));
        }
    }

    // One class per combination carrying positive weight, in bitmask order.
    let mut label_weight: BTreeMap<Combination, (f64, usize)> = BTreeMap::new();
    for demo in data {
        if demo.weight > 0.0 {
            let entry = label_weight.entry(demo.combination).or_default();
            entry.0 += demo.weight;
            entry.1 += 1;
        }
    }
    if label_weight.is_empty() {
        return Err(Error::NoDemonstrations);
    }
    let combos: Vec<Combination> = label_weight.keys().copied().collect();
    let diagonal: Vec<bool> = label_weight.values().map(|&(_, count)| count < d + 1).collect();

    let samples: Vec<DVector<f64>> = data
        .iter()
        .map(|demo| DVector::from_column_slice(&demo.features))
        .collect();
    let weights: Vec<f64> = data.iter().map(|demo| demo.weight).collect();
    let total_weight: f64 = weights.iter().sum();
    let k = combos.len();

    let mut resp = vec![0.0; data.len() * k];
    for (i, demo) in data.iter().enumerate() {
        if let Some(c) = combos.iter().position(|&c| c == demo.combination) {
            resp[i * k + c] = 1.0;
        }
    }

    let mut params = m_step(
        &samples,
        &weights,
        total_weight,
        &resp,
        &combos,
        &diagonal,
        None,
        config.eps_cov,
    )?;
    let mut ll = e_step(&params, &samples, &weights, &mut resp);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        let next = m_step(
            &samples,
            &weights,
            total_weight,
            &resp,
            &combos,
            &diagonal,
            Some(&params),
            config.eps_cov,
        )?;
        let next_ll = e_step(&next, &samples, &weights, &mut resp);
        iterations += 1;
        trace.push(next_ll);
        params = next;
        let change = (next_ll - ll).abs();
        ll = next_ll;
        if change <= config.tol * trace[trace.len() - 2].abs() {
            converged = true;
            break;
        }
    }

    let mut responsibility_mass = vec![0.0; k];
    let mut retained = vec![0.0; k];
    for (i, demo) in data.iter().enumerate() {
        for c in 0..k {
            responsibility_mass[c] += weights[i] * resp[i * k + c];
        }
        if let Some(c) = combos.iter().position(|&c| c == demo.combination) {
            retained[c] += weights[i] * resp[i * k + c];
        }
    }
    let label_retention = combos
        .iter()
        .zip(&retained)
        .map(|(c, r)| r / label_weight[c].0)
        .collect();
    let meta = FitMeta {
        iterations,
        converged,
        log_likelihood: ll,
        eps_cov: config.eps_cov,
        log_likelihood_trace: trace,
        responsibility_mass,
        label_retention,
        diagonal_classes: combos
            .iter()
            .zip(&diagonal)
            .filter(|(_, &diag)| diag)
            .map(|(&c, _)| c)
            .collect(),
    };
    GraspModel::with_meta(first.embodiment.clone(), tasks.clone(), params.classes, Some(meta))
}

/// Fills `resp` with posterior responsibilities and returns the weighted
/// dataset log-likelihood.
fn e_step(params: &Params, samples: &[DVector<f64>], weights: &[f64], resp: &mut [f64]) -> f64 {
    let k = params.classes.len();
    let mut lw = vec![0.0; k];
    let mut ll = 0.0;
    for (i, x) in samples.iter().enumerate() {
        for (c, class) in params.classes.iter().enumerate() {
            lw[c] = if class.prior() > 0.0 {
                class.prior().ln() + class.log_density_unchecked(x.as_slice())
            } else {
                f64::NEG_INFINITY
            };
        }
        let norm = log_sum_exp(&lw);
        for c in 0..k {
            resp[i * k + c] = (lw[c] - norm).exp();
        }
        if weights[i] > 0.0 {
            ll += weights[i] * norm;
        }
    }
    ll
}

#[allow(clippy::too_many_arguments)]
fn m_step(
    samples: &[DVector<f64>],
    weights: &[f64],
    total_weight: f64,
    resp: &[f64],
    combos: &[Combination],
    diagonal: &[bool],
    previous: Option<&Params>,
    eps_cov: f64,
) -> Result<Params> {
    let k = combos.len();
    let d = samples[0].len();
    let mut masses = vec![0.0; k];
    for (i, &w) in weights.iter().enumerate() {
        for c in 0..k {
            masses[c] += w * resp[i * k + c];
        }
    }
    let mass_total: f64 = masses.iter().sum();
    let mut classes = Vec::with_capacity(k);
    for c in 0..k {
        let prior = masses[c] / mass_total;
        if masses[c] <= f64::MIN_POSITIVE * total_weight {
            // Class lost all responsibility: keep its shape, drop its prior.
            let prev = previous
                .map(|p| &p.classes[c])
                .ok_or_else(|| Error::Config(format!("class {} has no weight", combos[c].bits())))?;
            classes.push(prev.with_prior(0.0));
            continue;
        }
        let mut mean = DVector::zeros(d);
        for (i, x) in samples.iter().enumerate() {
            let r = weights[i] * resp[i * k + c];
            if r != 0.0 {
                mean.axpy(r, x, 1.0);
            }
        }
        mean /= masses[c];
        let mut cov = DMatrix::zeros(d, d);
        for (i, x) in samples.iter().enumerate() {
            let r = weights[i] * resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            let diff = x - &mean;
            if diagonal[c] {
                for a in 0..d {
                    cov[(a, a)] += r * diff[a] * diff[a];
                }
            } else {
                for a in 0..d {
                    for b in a..d {
                        cov[(a, b)] += r * diff[a] * diff[b];
                    }
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[(a, b)] / masses[c];
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
            cov[(a, a)] += eps_cov;
        }
        classes.push(GaussianClass::new(combos[c], prior, mean, cov)?);
    }
    Ok(Params { classes })
}

/// One line of a demonstration dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemonstrationRecord {
    pub embodiment: String,
    pub combination: Vec<String>,
    pub features: Features,
    #[serde(default)]
    pub trial_id: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

/// Parsed, validated dataset for a single embodiment.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub tasks: TaskSet,
    pub demonstrations: Vec<Demonstration>,
}

impl Dataset {
    /// Parses JSON-Lines demonstrations.
    ///
    /// `tasks` fixes the task ordering; when absent, tasks are ordered by first
    /// appearance. `embodiment` selects one embodiment from a mixed file; a
    /// mixed file without a selection is rejected. Structured orientations are
    /// unwrapped toward the first sample of the same combination.
    pub fn from_jsonl(text: &str, tasks: Option<&TaskSet>, embodiment: Option<&str>) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: DemonstrationRecord = serde_json::from_str(line).map_err(|e| Error::Dataset {
                line: line_no,
                message: e.to_string(),
            })?;
            if let Some(want) = embodiment {
                if record.embodiment != want {
                    continue;
                }
            }
            records.push((line_no, record));
        }
        if records.is_empty() {
            return Err(Error::NoDemonstrations);
        }
        let first_embodiment = records[0].1.embodiment.clone();
        if let Some((line, r)) = records.iter().find(|(_, r)| r.embodiment != first_embodiment) {
            return Err(Error::Dataset {
                line: *line,
                message: format!(
                    "embodiment `{}` differs from `{first_embodiment}`; select one embodiment",
                    r.embodiment
                ),
            });
        }

        let tasks = match tasks {
            Some(t) => t.clone(),
            None => {
                let mut names: Vec<String> = Vec::new();
                for (_, r) in &records {
                    for name in &r.combination {
                        if name != NONE_LABEL && !names.contains(name) {
                            names.push(name.clone());
                        }
                    }
                }
                TaskSet::new(names)?
            }
        };

        let mut dim = None;
        let mut references: BTreeMap<Combination, [f64; 3]> = BTreeMap::new();
        let mut demonstrations = Vec::with_capacity(records.len());
        for (line, r) in records {
            let err = |message: String| Error::Dataset { line, message };
            let combination = if r.combination.len() == 1 && r.combination[0] == NONE_LABEL {
                Combination::EMPTY
            } else if r.combination.is_empty() {
                return Err(err(format!(
                    "empty combination; label samples that satisfy no task as [\"{NONE_LABEL}\"]"
                )));
            } else {
                tasks.combination(&r.combination).map_err(|e| err(e.to_string()))?
            };
            if !(r.weight >= 0.0 && r.weight.is_finite()) {
                return Err(err(format!("weight {} must be finite and non-negative", r.weight)));
            }
            let mut features = r.features.to_vec();
            if let Features::Structured(_) = r.features {
                let rot = [features[3], features[4], features[5]];
                let reference = *references.entry(combination).or_insert(rot);
                features[3..POSE_DIM].copy_from_slice(&unwrap_rotation_toward(rot, reference));
            }
            match dim {
                None => dim = Some((features.len(), line)),
                Some((d, first_line)) if d != features.len() => {
                    return Err(err(format!(
                        "feature dimension {} differs from {d} established at line {first_line}",
                        features.len()
                    )));
                }
                Some(_) => {}
            }
            demonstrations.push(Demonstration {
                embodiment: r.embodiment,
                combination,
                features,
                trial_id: r.trial_id,
                weight: r.weight,
            });
        }
        Ok(Self { tasks, demonstrations })
    }
}
