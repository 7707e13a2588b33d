mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::*;
use graspshare::{FrameContext, IntentVector, Mode, Solution};
use graspshare_service::{router, AppState, BoundsEntry, CatalogEntry, ErrorBody, Registry, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::json;
use tower::ServiceExt;

async fn call(state: &std::sync::Arc<AppState>, method: &str, uri: &str, body: Option<String>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn empty_registry_lists_nothing() {
    let state = AppState::new(Registry::new(), ServiceConfig::default());
    let (status, body) = call(&state, "GET", "/models", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "[]");
}

#[tokio::test]
async fn catalog_and_bounds() {
    let state = state(30);
    let (_, body) = call(&state, "GET", "/models", None).await;
    let models: Vec<CatalogEntry> = serde_json::from_str(&body).unwrap();
    assert_eq!(models.len(), 2);
    assert!(models.iter().all(|m| m.d == 8));
    let human = models.iter().find(|m| m.id == "human").unwrap();
    assert!(human.human);
    assert_eq!(human.combinations, vec![0b101, 0b010, 0b001]);
    assert_eq!(human.labels[0], "{use, handover}");

    let (_, body) = call(&state, "GET", "/bounds", None).await;
    let bounds: Vec<BoundsEntry> = serde_json::from_str(&body).unwrap();
    assert_eq!(bounds.len(), 1);
    assert_eq!(bounds[0].id, "table");
    assert_eq!(bounds[0].lower[2], 0.05);
}

#[tokio::test]
async fn mimic_returns_the_operator_frame() {
    let state = state(30);
    let features = frame(10);
    let body = json!({"model": "gripper", "mode": "mimic", "features": features, "bounds": "table"});
    let (status, text) = call(&state, "POST", "/solve", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let s: Solution = serde_json::from_str(&text).unwrap();
    assert_eq!(s.robot, features);
    assert_eq!(s.mode, Mode::Mimic);
}

#[tokio::test]
async fn solve_matches_the_library_bit_for_bit() {
    let state = state(30);
    let reg = registry();
    let robot = reg.model("gripper").unwrap();
    let human = reg.human().unwrap().1;
    let bounds = table_bounds();
    for seed in [0u64, 9] {
        let config = graspshare::SolverConfig {
            seed,
            ..Default::default()
        };
        let ctx = FrameContext::new(robot, Some(human), &bounds, None, config).unwrap();
        for (i, mode) in [(5, Mode::Knitro), (40, Mode::IntentOnly), (77, Mode::Knitro)] {
            let features = frame(i);
            let intent = (i == 40).then(|| IntentVector::new(vec![0.9, 0.1, 0.7]).unwrap());
            let expected = ctx.solve_frame(mode, &features, intent.as_ref()).unwrap();
            let mut body =
                json!({"model": "gripper", "mode": mode, "features": features, "bounds": "table", "seed": seed});
            if let Some(p) = &intent {
                body["intent"] = json!(p);
            }
            let (status, text) = call(&state, "POST", "/solve", Some(body.to_string())).await;
            assert_eq!(status, StatusCode::OK, "{text}");
            assert_eq!(text, serde_json::to_string(&expected).unwrap());
            let parsed: Solution = serde_json::from_str(&text).unwrap();
            assert_eq!(parsed, expected);
        }
    }
}

#[tokio::test]
async fn structured_features_are_accepted() {
    let state = state(30);
    let f = frame(3);
    let body = json!({
        "model": "gripper", "mode": "mimic", "bounds": "table",
        "features": {"position": &f[0..3], "orientation": &f[3..6], "apertures": &f[6..8]},
    });
    let (status, text) = call(&state, "POST", "/solve", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let s: Solution = serde_json::from_str(&text).unwrap();
    for (a, b) in s.robot.iter().zip(&f) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[tokio::test]
async fn errors_are_json_with_status() {
    let state = state(30);
    let body = json!({"model": "nope", "mode": "mimic", "features": frame(0)});
    let (status, text) = call(&state, "POST", "/solve", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let err: ErrorBody = serde_json::from_str(&text).unwrap();
    assert_eq!(err.error, "unknown_model");

    let body = json!({"model": "gripper", "mode": "teleport", "features": frame(0)});
    let (status, text) = call(&state, "POST", "/solve", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: ErrorBody = serde_json::from_str(&text).unwrap();
    assert_eq!(err.error, "invalid_body");
    assert!(err.message.starts_with("mode:"), "{}", err.message);

    let body = json!({"model": "gripper", "mode": "mimic", "features": [0.1, 0.2]});
    let (status, text) = call(&state, "POST", "/solve", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(
        serde_json::from_str::<ErrorBody>(&text).unwrap().error,
        "dimension_mismatch"
    );

    let body = json!({"model": "gripper", "mode": "mimic", "features": frame(0), "bounds": "ceiling"});
    let (status, _) = call(&state, "POST", "/solve", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let body = json!({"model": "gripper", "mode": "mimic", "features": frame(0), "intent": [1.5, 0, 0]});
    let (status, text) = call(&state, "POST", "/solve", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(serde_json::from_str::<ErrorBody>(&text)
        .unwrap()
        .message
        .starts_with("intent"));
}

#[tokio::test]
async fn intent_endpoint_returns_both_vectors() {
    let state = state(30);
    let body = json!({"features": frame(20)});
    let (status, text) = call(&state, "POST", "/intent", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let reg = registry();
    let human = reg.human().unwrap().1;
    let p = graspshare::estimate_intent(human, &frame(20)).unwrap();
    let q = graspshare::powerset_target(human.tasks(), &p).unwrap();
    assert_eq!(v["model"], "human");
    assert_eq!(v["intent"], json!(p.as_slice()));
    assert_eq!(v["target"], json!(q.as_slice()));

    let empty = AppState::new(Registry::new(), ServiceConfig::default());
    let (status, text) = call(&empty, "POST", "/intent", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(
        serde_json::from_str::<ErrorBody>(&text).unwrap().error,
        "no_human_model"
    );
}

#[tokio::test]
async fn reload_swaps_the_registry() {
    let state = state(30);
    let mut smaller = Registry::new();
    smaller.insert_model("gripper", hand("gripper", 1.0, 0.0)).unwrap();
    state.reload(smaller);
    let (_, body) = call(&state, "GET", "/models", None).await;
    let models: Vec<CatalogEntry> = serde_json::from_str(&body).unwrap();
    assert_eq!(models.len(), 1);
    assert_eq!(state.snapshot().generation, 1);
}

#[tokio::test]
async fn registry_loads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("models");
    std::fs::create_dir(&models).unwrap();
    graspshare::save_model(&hand("human", 1.5, 0.0), models.join("operator.json")).unwrap();
    graspshare::save_model(&hand("gripper", 1.0, 0.0), models.join("gripper.json")).unwrap();
    let bounds = dir.path().join("gripper.json");
    std::fs::write(&bounds, serde_json::to_string(&table_bounds()).unwrap()).unwrap();
    let reg = Registry::load(&models, Some(&bounds), None, None).unwrap();
    assert_eq!(reg.human().unwrap().0, "operator");
    assert_eq!(reg.default_bounds("gripper").unwrap(), table_bounds());
    assert_eq!(reg.catalog().len(), 2);
    assert!(Registry::load(&models, None, Some("missing"), None).is_err());
}
