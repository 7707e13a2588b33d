#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use graspshare::intent::{Combination, TaskSet};
use graspshare::{GaussianClass, GraspModel, WorkspaceBounds};
use graspshare_service::{AppState, Registry, ServiceConfig};
use nalgebra::{DMatrix, DVector};

pub fn hand(embodiment: &str, spread: f64, shift: f64) -> GraspModel {
    let d = 8;
    let tasks = TaskSet::new(["use", "transfer", "handover"]).unwrap();
    let mut c1 = DMatrix::<f64>::identity(d, d) * (0.02 * spread);
    c1[(0, 1)] = 0.004 * spread;
    c1[(1, 0)] = 0.004 * spread;
    let c2 = DMatrix::<f64>::identity(d, d) * (0.03 * spread);
    let c3 = DMatrix::<f64>::identity(d, d) * (0.025 * spread);
    let m1 = [0.4 + shift, 0.0, 0.1, 0.0, 1.2, 0.0, 0.6, 0.6];
    let m2 = [0.5, 0.1 + shift, 0.2, 1.5, 0.0, 0.3, 0.2, 0.3];
    let m3 = [0.45, 0.05, 0.3 + shift, 0.7, 0.6, 0.1, 0.8, 0.2];
    GraspModel::new(
        embodiment,
        tasks,
        vec![
            GaussianClass::new(Combination(0b101), 0.4, DVector::from_column_slice(&m1), c1).unwrap(),
            GaussianClass::new(Combination(0b010), 0.35, DVector::from_column_slice(&m2), c2).unwrap(),
            GaussianClass::new(Combination(0b001), 0.25, DVector::from_column_slice(&m3), c3).unwrap(),
        ],
    )
    .unwrap()
}

pub fn table_bounds() -> WorkspaceBounds {
    // z floor is the table surface.
    let lower = vec![-1.0, -1.0, 0.05, -4.0, -4.0, -4.0, 0.0, 0.0];
    let upper = vec![1.5, 1.0, 1.2, 4.0, 4.0, 4.0, 1.0, 1.0];
    WorkspaceBounds::new(lower, upper).unwrap()
}

pub fn registry() -> Registry {
    let mut reg = Registry::new();
    reg.insert_model("human", hand("human", 1.6, 0.05)).unwrap();
    reg.insert_model("gripper", hand("gripper", 1.0, 0.0)).unwrap();
    reg.set_human("human").unwrap();
    reg.insert_bounds("table", table_bounds());
    reg
}

pub fn state(rate_limit: u32) -> Arc<AppState> {
    AppState::new(
        registry(),
        ServiceConfig {
            rate_limit,
            ..ServiceConfig::default()
        },
    )
}

pub async fn spawn(state: Arc<AppState>) -> SocketAddr {
    let (tx, rx) = tokio::sync::oneshot::channel();
    tokio::spawn(async move {
        graspshare_service::serve("127.0.0.1:0".parse().unwrap(), state, move |addr| {
            let _ = tx.send(addr);
        })
        .await
        .unwrap();
    });
    rx.await.unwrap()
}

/// Deterministic operator path sweeping across the workspace.
pub fn frame(i: usize) -> Vec<f64> {
    let t = i as f64 / 99.0;
    vec![
        0.3 + 0.3 * t,
        0.15 - 0.2 * t,
        0.1 + 0.25 * t,
        1.2 * t,
        1.1 - 0.9 * t,
        0.2 * (6.0 * t).sin(),
        0.6 - 0.4 * t,
        0.3 + 0.3 * t,
    ]
}
