use std::collections::BTreeMap;
use std::path::Path;

use graspshare::divergence::AlignmentTable;
use graspshare::{load_model, GraspModel, WorkspaceBounds};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Embodiment name that marks a model as the operator's.
pub const HUMAN_EMBODIMENT: &str = "human";

/// Loaded models and bounds, addressed by file stem. Immutable once built;
/// the service swaps whole registries on reload.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    models: BTreeMap<String, GraspModel>,
    bounds: BTreeMap<String, WorkspaceBounds>,
    human_id: Option<String>,
    alignments: Option<AlignmentTable>,
}

/// One entry of `GET /models`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub embodiment: String,
    pub d: usize,
    pub tasks: Vec<String>,
    /// Class combinations as bitmasks over `tasks`.
    pub combinations: Vec<u32>,
    /// Set-notation labels, same order as `combinations`.
    pub labels: Vec<String>,
    pub human: bool,
}

/// One entry of `GET /bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsEntry {
    pub id: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn json_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, ServiceError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| ServiceError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `*.json` model in `models_dir`. `bounds` may be a single
    /// bounds file or a directory of them. The human model is `human_id` when
    /// given, otherwise the first model whose embodiment is `human`.
    pub fn load(
        models_dir: &Path,
        bounds: Option<&Path>,
        human_id: Option<&str>,
        alignments: Option<&Path>,
    ) -> Result<Self, ServiceError> {
        let mut reg = Self::new();
        for path in json_files(models_dir)? {
            reg.insert_model(stem(&path), load_model(&path)?)?;
        }
        if let Some(path) = bounds {
            let files = if path.is_dir() {
                json_files(path)?
            } else {
                vec![path.to_path_buf()]
            };
            for file in files {
                reg.bounds.insert(stem(&file), WorkspaceBounds::load(&file)?);
            }
        }
        if let Some(path) = alignments {
            let text = std::fs::read_to_string(path).map_err(|e| ServiceError::io(path, e))?;
            reg.alignments = Some(serde_json::from_str(&text).map_err(graspshare::Error::from)?);
        }
        match human_id {
            Some(id) => reg.set_human(id)?,
            None => {
                reg.human_id = reg
                    .models
                    .iter()
                    .find(|(_, m)| m.embodiment() == HUMAN_EMBODIMENT)
                    .map(|(id, _)| id.clone());
            }
        }
        Ok(reg)
    }

    pub fn insert_model(&mut self, id: impl Into<String>, model: GraspModel) -> Result<(), ServiceError> {
        let id = id.into();
        if self.models.contains_key(&id) {
            return Err(ServiceError::DuplicateId(id));
        }
        self.models.insert(id, model);
        Ok(())
    }

    pub fn insert_bounds(&mut self, id: impl Into<String>, bounds: WorkspaceBounds) {
        self.bounds.insert(id.into(), bounds);
    }

    pub fn set_human(&mut self, id: &str) -> Result<(), ServiceError> {
        if !self.models.contains_key(id) {
            return Err(ServiceError::UnknownModel(id.to_string()));
        }
        self.human_id = Some(id.to_string());
        Ok(())
    }

    pub fn set_alignments(&mut self, table: AlignmentTable) {
        self.alignments = Some(table);
    }

    pub fn model(&self, id: &str) -> Result<&GraspModel, ServiceError> {
        self.models
            .get(id)
            .ok_or_else(|| ServiceError::UnknownModel(id.to_string()))
    }

    pub fn human(&self) -> Option<(&str, &GraspModel)> {
        let id = self.human_id.as_deref()?;
        Some((id, &self.models[id]))
    }

    pub fn bounds(&self, id: &str) -> Result<&WorkspaceBounds, ServiceError> {
        self.bounds
            .get(id)
            .ok_or_else(|| ServiceError::UnknownBounds(id.to_string()))
    }

    /// Bounds used when a request names none: the bounds file sharing the
    /// model id, else the hand default for the model's dimension.
    pub fn default_bounds(&self, model_id: &str) -> Result<WorkspaceBounds, ServiceError> {
        let model = self.model(model_id)?;
        Ok(self
            .bounds
            .get(model_id)
            .filter(|b| b.dim() == model.dim())
            .cloned()
            .unwrap_or_else(|| WorkspaceBounds::hand_default(model.dim())))
    }

    pub fn alignments(&self) -> Option<&AlignmentTable> {
        self.alignments.as_ref()
    }

    pub fn catalog(&self) -> Vec<CatalogEntry> {
        self.models
            .iter()
            .map(|(id, m)| CatalogEntry {
                id: id.clone(),
                embodiment: m.embodiment().to_string(),
                d: m.dim(),
                tasks: m.tasks().names().to_vec(),
                combinations: m.classes().iter().map(|c| c.combination().bits()).collect(),
                labels: m.classes().iter().map(|c| m.tasks().label(c.combination())).collect(),
                human: self.human_id.as_deref() == Some(id.as_str()),
            })
            .collect()
    }

    pub fn bounds_catalog(&self) -> Vec<BoundsEntry> {
        self.bounds
            .iter()
            .map(|(id, b)| BoundsEntry {
                id: id.clone(),
                lower: b.lower().to_vec(),
                upper: b.upper().to_vec(),
            })
            .collect()
    }
}
