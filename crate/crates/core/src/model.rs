//! Per-embodiment grasp models: one Gaussian class per task combination.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{log_sum_exp, min_eigenvalue, GaussianClass};
use crate::intent::{Combination, TargetVector, TaskSet};

/// Version written into model files; loading any other version fails.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

const PRIOR_SUM_TOLERANCE: f64 = 1e-10;

/// Bookkeeping from the EM fit that produced a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub eps_cov: f64,
    /// Dataset log-likelihood after each E-step, starting from the
    /// label-seeded parameters.
    pub log_likelihood_trace: Vec<f64>,
    /// Final weighted responsibility mass per class (same order as `classes`).
    pub responsibility_mass: Vec<f64>,
    /// Fraction of each class's labeled weight whose final responsibility
    /// stayed with its own label.
    pub label_retention: Vec<f64>,
    /// Classes fitted with a diagonal covariance for lack of samples.
    pub diagonal_classes: Vec<Combination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct GraspModel {
    embodiment: String,
    tasks: TaskSet,
    dim: usize,
    classes: Vec<GaussianClass>,
    fit_meta: Option<FitMeta>,
}

impl GraspModel {
    pub fn new(embodiment: impl Into<String>, tasks: TaskSet, classes: Vec<GaussianClass>) -> Result<Self> {
        Self::with_meta(embodiment, tasks, classes, None)
    }

    pub fn with_meta(
        embodiment: impl Into<String>,
        tasks: TaskSet,
        classes: Vec<GaussianClass>,
        fit_meta: Option<FitMeta>,
    ) -> Result<Self> {
        let embodiment = embodiment.into();
        let Some(first) = classes.first() else {
            return Err(Error::EmptyModel);
        };
        let dim = first.dim();
        let mut seen = Vec::with_capacity(classes.len());
        for class in &classes {
            if class.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "class dimension",
                    expected: dim,
                    actual: class.dim(),
                });
            }
            if !tasks.contains(class.combination()) {
                return Err(Error::CorruptModel(format!(
                    "combination {} outside the {}-task set",
                    class.combination().bits(),
                    tasks.len()
                )));
            }
            if seen.contains(&class.combination()) {
                return Err(Error::CorruptModel(format!(
                    "duplicate class for {}",
                    tasks.label(class.combination())
                )));
            }
            seen.push(class.combination());
        }
        let total: f64 = classes.iter().map(GaussianClass::prior).sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOLERANCE {
            return Err(Error::CorruptModel(format!("class priors sum to {total}")));
        }
        if let Some(meta) = &fit_meta {
            let floor = meta.eps_cov * (1.0 - 1e-6);
            for class in &classes {
                let min_eig = min_eigenvalue(class.covariance());
                if min_eig < floor {
                    return Err(Error::CorruptModel(format!(
                        "class {} has eigenvalue {min_eig:e} below the regularization floor {:e}",
                        tasks.label(class.combination()),
                        meta.eps_cov
                    )));
                }
            }
        }
        Ok(Self {
            embodiment,
            tasks,
            dim,
            classes,
            fit_meta,
        })
    }

    pub fn embodiment(&self) -> &str {
        &self.embodiment
    }

    pub fn tasks(&self) -> &TaskSet {
        &self.tasks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[GaussianClass] {
        &self.classes
    }

    pub fn fit_meta(&self) -> Option<&FitMeta> {
        self.fit_meta.as_ref()
    }

    pub fn class_for(&self, combination: Combination) -> Option<&GaussianClass> {
        self.classes.iter().find(|c| c.combination() == combination)
    }

    /// Same model with every prior multiplied by `factor` and renormalized.
    /// Used to check posterior invariance to prior scaling.
    pub fn with_scaled_priors(&self, factor: f64) -> Result<Self> {
        let total: f64 = self.classes.iter().map(|c| c.prior() * factor).sum();
        let classes = self
            .classes
            .iter()
            .map(|c| c.with_prior(c.prior() * factor / total))
            .collect();
        Self::with_meta(self.embodiment.clone(), self.tasks.clone(), classes, None)
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "feature vector vs model dimension",
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `ln(P(x|k) P(k))` per class; classes with zero prior get `-inf`.
    pub(crate) fn log_joint(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.classes.iter().map(|c| {
            if c.prior() > 0.0 {
                c.prior().ln() + c.log_density_unchecked(x)
            } else {
                f64::NEG_INFINITY
            }
        }));
    }

    /// Posterior `P(k|x)` for every class, in class order, computed in log space.
    pub fn class_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut lw = Vec::with_capacity(self.classes.len());
        self.log_joint(x, &mut lw);
        let norm = log_sum_exp(&lw);
        if norm == f64::NEG_INFINITY {
            return Err(Error::EmptyModel);
        }
        Ok(lw.iter().map(|v| (v - norm).exp()).collect())
    }

    /// Posterior laid out over all `2^m` combinations; combinations without a
    /// class carry zero.
    pub fn posterior(&self, x: &[f64]) -> Result<TargetVector> {
        let post = self.class_posterior(x)?;
        let mut q = vec![0.0; self.tasks.combinations()];
        for (class, p) in self.classes.iter().zip(post) {
            q[class.combination().index()] = p;
        }
        Ok(TargetVector::from_raw(q))
    }

    /// Prior-weighted, moment-matched single Gaussian over all classes.
    pub fn pooled(&self) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim;
        let mut mean = DVector::zeros(d);
        for c in &self.classes {
            mean += c.mean() * c.prior();
        }
        let mut cov = DMatrix::zeros(d, d);
        for c in &self.classes {
            let diff = c.mean() - &mean;
            cov += (c.covariance() + &diff * diff.transpose()) * c.prior();
        }
        (mean, cov)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_model(path)
    }
}

pub fn save_model(model: &GraspModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(model)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GraspModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

/// Parses a model document, checking the schema version before anything else.
pub fn model_from_json(text: &str) -> Result<GraspModel> {
    #[derive(Deserialize)]
    struct VersionProbe {
        schema_version: u32,
    }
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: MODEL_SCHEMA_VERSION,
            actual: probe.schema_version,
        });
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| {
        // Class validation errors surface through serde as strings.
        Error::CorruptModel(e.to_string())
    })?;
    GraspModel::try_from(file)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    embodiment: String,
    tasks: TaskSet,
    d: usize,
    classes: Vec<GaussianClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit_meta: Option<FitMeta>,
}

impl TryFrom<ModelFile> for GraspModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: MODEL_SCHEMA_VERSION,
                actual: file.schema_version,
            });
        }
        let model = GraspModel::with_meta(file.embodiment, file.tasks, file.classes, file.fit_meta)?;
        if model.dim != file.d {
            return Err(Error::CorruptModel(format!(
                "declared d={} but classes have dimension {}",
                file.d, model.dim
            )));
        }
        Ok(model)
    }
}

impl From<GraspModel> for ModelFile {
    fn from(model: GraspModel) -> Self {
        ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            embodiment: model.embodiment,
            tasks: model.tasks,
            d: model.dim,
            classes: model.classes,
            fit_meta: model.fit_meta,
        }
    }
}
