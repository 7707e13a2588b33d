//! Live shared-control endpoint.
//!
//! `GET /models`, `GET /bounds`, `POST /solve`, `POST /intent` and a
//! WebSocket at `/session` streaming one solution per hand frame. Every
//! solve goes through [`graspshare::FrameContext`], the same path the CLI
//! replay uses, so wire results equal library results bit for bit.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use graspshare::divergence::ArbitrationWeights;
use graspshare::intent::Combination;
use graspshare::replay::ResolvedFrame;
use graspshare::{FrameContext, IntentVector, Mode, Solution, SolverConfig, WorkspaceBounds};

mod error;
mod http;
mod registry;
mod session;
pub mod wire;

pub use error::{ErrorBody, ServiceError};
pub use http::router;
pub use registry::{BoundsEntry, CatalogEntry, Registry, HUMAN_EMBODIMENT};
use wire::BoundsSpec;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Solves per second per session; 0 disables coalescing.
    pub rate_limit: u32,
    /// Solutions kept per session.
    pub history: usize,
    pub solver: SolverConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            rate_limit: 30,
            history: 64,
            solver: SolverConfig::default(),
        }
    }
}

/// Registry snapshot with the generation it was installed under.
#[derive(Debug)]
pub struct Snapshot {
    pub generation: u64,
    pub registry: Registry,
}

type WeightKey = (u64, String, String, Option<Combination>);

/// State shared by all connections.
#[derive(Debug)]
pub struct AppState {
    current: RwLock<Arc<Snapshot>>,
    weights: Mutex<HashMap<WeightKey, ArbitrationWeights>>,
    pub config: ServiceConfig,
}

/// Robot model, bounds and solver settings a frame is solved against.
pub(crate) struct Target<'a> {
    pub model_id: &'a str,
    pub bounds: WorkspaceBounds,
    pub seed: Option<u64>,
}

impl AppState {
    pub fn new(registry: Registry, config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            current: RwLock::new(Arc::new(Snapshot {
                generation: 0,
                registry,
            })),
            weights: Mutex::new(HashMap::new()),
            config,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("registry lock poisoned").clone()
    }

    /// Swaps in a new registry; in-flight requests finish on the old one.
    pub fn reload(&self, registry: Registry) {
        let mut current = self.current.write().expect("registry lock poisoned");
        let generation = current.generation + 1;
        *current = Arc::new(Snapshot { generation, registry });
        self.weights.lock().expect("weights lock poisoned").clear();
    }

    pub(crate) fn resolve_bounds(
        snapshot: &Snapshot,
        model_id: &str,
        spec: Option<&BoundsSpec>,
    ) -> Result<WorkspaceBounds, ServiceError> {
        match spec {
            None => snapshot.registry.default_bounds(model_id),
            Some(BoundsSpec::Id(id)) => Ok(snapshot.registry.bounds(id)?.clone()),
            Some(BoundsSpec::Inline(b)) => Ok(b.clone()),
        }
    }

    fn solver_config(&self, seed: Option<u64>) -> SolverConfig {
        let mut config = self.config.solver;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        config
    }

    fn cached_weights(
        &self,
        snapshot: &Snapshot,
        ctx: &FrameContext<'_>,
        model_id: &str,
        frame: &ResolvedFrame,
    ) -> Result<ArbitrationWeights, ServiceError> {
        let human_id = snapshot
            .registry
            .human()
            .map(|(id, _)| id.to_string())
            .unwrap_or_default();
        let key = (
            snapshot.generation,
            human_id,
            model_id.to_string(),
            FrameContext::weight_key(&frame.target),
        );
        if let Some(w) = self.weights.lock().expect("weights lock poisoned").get(&key) {
            return Ok(w.clone());
        }
        let w = ctx.weights_for(frame)?;
        self.weights
            .lock()
            .expect("weights lock poisoned")
            .insert(key, w.clone());
        Ok(w)
    }

    /// Solves one operator frame exactly as [`FrameContext::solve_frame`] would.
    pub(crate) fn solve(
        &self,
        snapshot: &Snapshot,
        target: &Target<'_>,
        mode: Mode,
        features: &[f64],
        intent: Option<&IntentVector>,
        weights_override: Option<ArbitrationWeights>,
    ) -> Result<Solution, ServiceError> {
        let reg = &snapshot.registry;
        let robot = reg.model(target.model_id)?;
        let human = reg.human().map(|(_, m)| m);
        let ctx = FrameContext::new(
            robot,
            human,
            &target.bounds,
            reg.alignments(),
            self.solver_config(target.seed),
        )?;
        let frame = ctx.resolve(features, intent)?;
        let weights = match (mode, weights_override) {
            (Mode::Knitro, Some(w)) => Some(w),
            (Mode::Knitro, None) => Some(self.cached_weights(snapshot, &ctx, target.model_id, &frame)?),
            _ => None,
        };
        Ok(ctx.solve_resolved(mode, &frame, weights)?)
    }
}

/// Binds `addr` and serves until the process stops. Returns the bound address
/// through `on_bound` before accepting connections.
pub async fn serve(
    addr: SocketAddr,
    state: Arc<AppState>,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Io {
            path: addr.to_string(),
            message: e.to_string(),
        })?;
    let local = listener.local_addr().map_err(|e| ServiceError::Io {
        path: addr.to_string(),
        message: e.to_string(),
    })?;
    tracing::info!(%local, "teleop service listening");
    on_bound(local);
    axum::serve(listener, router(state))
        .await
        .map_err(|e| ServiceError::Io {
            path: local.to_string(),
            message: e.to_string(),
        })
}
