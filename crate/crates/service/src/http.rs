use std::sync::Arc;

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use graspshare::{estimate_intent, powerset_target, Solution};

use crate::error::{parse_json, ServiceError};
use crate::registry::{BoundsEntry, CatalogEntry};
use crate::wire::{IntentBody, IntentResponse, SolveBody};
use crate::{session, AppState, Target};

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/models", get(models))
        .route("/bounds", get(bounds))
        .route("/solve", post(solve))
        .route("/intent", post(intent))
        .route("/session", get(session::upgrade))
        .with_state(state)
}

async fn models(State(state): State<Arc<AppState>>) -> Json<Vec<CatalogEntry>> {
    Json(state.snapshot().registry.catalog())
}

async fn bounds(State(state): State<Arc<AppState>>) -> Json<Vec<BoundsEntry>> {
    Json(state.snapshot().registry.bounds_catalog())
}

async fn solve(State(state): State<Arc<AppState>>, body: String) -> Result<Json<Solution>, ServiceError> {
    let req: SolveBody = parse_json(&body)?;
    let snapshot = state.snapshot();
    let target = Target {
        model_id: &req.model,
        bounds: AppState::resolve_bounds(&snapshot, &req.model, req.bounds.as_ref())?,
        seed: req.seed,
    };
    let solution = state.solve(
        &snapshot,
        &target,
        req.mode,
        &req.features.to_vec(),
        req.intent.as_ref(),
        req.weights_override,
    )?;
    Ok(Json(solution))
}

async fn intent(State(state): State<Arc<AppState>>, body: String) -> Result<Json<IntentResponse>, ServiceError> {
    let req: IntentBody = parse_json(&body)?;
    let snapshot = state.snapshot();
    let reg = &snapshot.registry;
    let (id, model) = match &req.model {
        Some(id) => (id.as_str(), reg.model(id)?),
        None => reg.human().ok_or(ServiceError::NoHumanModel)?,
    };
    let p = estimate_intent(model, &req.features.to_vec())?;
    let q = powerset_target(model.tasks(), &p)?;
    Ok(Json(IntentResponse {
        model: id.to_string(),
        tasks: model.tasks().names().to_vec(),
        intent: p.as_slice().to_vec(),
        target: q.as_slice().to_vec(),
    }))
}
