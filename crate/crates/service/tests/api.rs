use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use psrom_core::{CenterlinePoint, CenterlineTree, SolverConfig};
use psrom_service::{router, AppState, BuildConfig, ModelStore};
use serde_json::{json, Value};
use tower::ServiceExt;

fn point(id: usize, parent: Option<usize>, len: f64, radius: f64, is_outlet: bool) -> CenterlinePoint {
    CenterlinePoint { id, parent, arc_length_from_parent: len, radius, is_outlet }
}

/// Cosine narrowing of the given severity centered on `center`, 1 cm long.
fn bump(s: f64, center: f64, severity: f64) -> f64 {
    let d = (s - center).abs() / 0.5;
    if d < 1.0 {
        severity * 0.5 * (1.0 + (std::f64::consts::PI * d).cos())
    } else {
        0.0
    }
}

/// Tapered vessel of `length` cm with the given `(center, severity)` stenoses.
fn vessel(length: f64, lesions: &[(f64, f64)]) -> CenterlineTree {
    let h = 0.05;
    let n = (length / h).round() as usize;
    let pts = (0..=n)
        .map(|i| {
            let s = i as f64 * h;
            let narrowing: f64 = lesions.iter().map(|&(c, sev)| bump(s, c, sev)).sum();
            point(i, i.checked_sub(1), if i == 0 { 0.0 } else { h }, (0.2 - 0.005 * s) * (1.0 - narrowing), i == n)
        })
        .collect();
    CenterlineTree::new("vessel", pts).unwrap()
}

fn healthy_bifurcation() -> CenterlineTree {
    let h = 0.05;
    let mut pts: Vec<CenterlinePoint> = (0..=60)
        .map(|i| point(i, i.checked_sub(1), if i == 0 { 0.0 } else { h }, 0.2 - 0.001 * i as f64, false))
        .collect();
    let mut next = 61;
    for r0 in [0.15, 0.12] {
        for j in 0..40 {
            let parent = if j == 0 { 60 } else { next - 1 };
            pts.push(point(next, Some(parent), h, r0 - 0.0005 * j as f64, j == 39));
            next += 1;
        }
    }
    CenterlineTree::new("healthy", pts).unwrap()
}

fn create_body(tree: &CenterlineTree) -> Value {
    json!({ "tree": tree.to_document() })
}

fn app_with(max_models: usize, dir: Option<PathBuf>) -> (Router, Arc<ModelStore>) {
    let store = Arc::new(ModelStore::new(NonZeroUsize::new(max_models).unwrap(), dir).unwrap());
    let state = AppState { store: store.clone(), build: BuildConfig::default(), solver: SolverConfig::default() };
    (router(state), store)
}

fn app() -> Router {
    app_with(8, None).0
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let request = match body {
        Some(b) => request.body(Body::from(b.to_string())).unwrap(),
        None => request.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router, tree: &CenterlineTree) -> String {
    let (status, body) = send(app, "POST", "/models", Some(create_body(tree))).await;
    assert!(status.is_success(), "{status}: {body}");
    body["model_id"].as_str().unwrap().to_string()
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[tokio::test]
async fn create_reports_anchors_and_reuses_existing_model() {
    let app = app();
    let tree = vessel(8.0, &[(4.0, 0.6)]);
    let (status, first) = send(&app, "POST", "/models", Some(create_body(&tree))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(first["built"], true);
    let labels: Vec<&str> = first["anchors"].as_array().unwrap().iter().map(|a| a["label"].as_str().unwrap()).collect();
    assert_eq!(labels.len(), 4);
    assert!(first["anchors"][0]["outlet_ffr"]["160"].as_f64().unwrap() < 1.0);

    let (status, second) = send(&app, "POST", "/models", Some(create_body(&tree))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(second["built"], false);
    assert_eq!(second["model_id"], first["model_id"]);
}

#[tokio::test]
async fn cycle_is_rejected_with_ids() {
    let doc = json!({
        "format_version": 1,
        "name": "cycle",
        "points": [
            {"id": 0, "parent": null, "radius": 0.2, "is_outlet": false},
            {"id": 1, "parent": 2, "arc_length_from_parent": 0.1, "radius": 0.2, "is_outlet": false},
            {"id": 2, "parent": 1, "arc_length_from_parent": 0.1, "radius": 0.2, "is_outlet": true}
        ]
    });
    let (status, body) = send(&app(), "POST", "/models", Some(json!({ "tree": doc }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "invalid_tree");
    let ids: Vec<u64> =
        body["error"]["detail"]["ids"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert!(ids.contains(&1) && ids.contains(&2), "{body}");
}

#[tokio::test]
async fn malformed_bodies_carry_codes() {
    let app = app();
    let request = Request::builder()
        .method("POST")
        .uri("/models")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&response.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["error"]["code"], "invalid_json");

    let tree = vessel(3.0, &[]);
    let bad_bc = json!({ "tree": tree.to_document(), "boundary_conditions": {
        "aortic_pressure": 133322.0, "outlet_resistances": {"5": 1000.0}, "viscosity": 0.04, "density": 1.06
    }});
    let (status, body) = send(&app, "POST", "/models", Some(bad_bc)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "invalid_boundary_conditions");
}

#[tokio::test]
async fn healthy_model_has_no_lesions() {
    let app = app();
    let id = create(&app, &healthy_bifurcation()).await;
    let (status, body) = send(&app, "GET", &format!("/models/{id}/lesions"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["lesions"], json!([]));
}

#[tokio::test]
async fn serial_fixture_lists_serial_members() {
    let app = app();
    let id = create(&app, &vessel(12.0, &[(3.0, 0.5), (6.0, 0.5), (9.0, 0.5)])).await;
    let (_, body) = send(&app, "GET", &format!("/models/{id}/lesions"), None).await;
    let kinds: Vec<&str> = body["lesions"].as_array().unwrap().iter().map(|l| l["kind"].as_str().unwrap()).collect();
    assert!(kinds.iter().filter(|k| **k == "serial-member").count() >= 3, "{kinds:?}");
}

#[tokio::test]
async fn stenting_the_only_lesion_raises_distal_ffr() {
    let app = app();
    let id = create(&app, &vessel(8.0, &[(4.0, 0.6)])).await;
    let (_, lesions) = send(&app, "GET", &format!("/models/{id}/lesions"), None).await;
    assert_eq!(lesions["lesions"].as_array().unwrap().len(), 1);
    assert_eq!(lesions["lesions"][0]["kind"], "focal");
    let plan = lesions["lesions"][0]["suggested_plan"].clone();

    let uri = format!("/models/{id}/evaluate");
    let (status, first) = send(&app, "POST", &uri, Some(json!({ "plan": plan }))).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_eq!(first["converged"], true);
    let points = first["evaluation_points"].as_array().unwrap();
    assert!(!points.is_empty());
    for p in points {
        assert!(p["ffr_post"].as_f64().unwrap() > p["ffr_pre"].as_f64().unwrap() + 0.01, "{p}");
    }
    let trace = &first["traces"][0];
    let post = trace["ffr_post"].as_array().unwrap();
    let pre = trace["ffr_pre"].as_array().unwrap();
    assert!(post.last().unwrap().as_f64().unwrap() > pre.last().unwrap().as_f64().unwrap());

    let (_, second) = send(&app, "POST", &uri, Some(json!({ "plan": plan }))).await;
    assert_eq!(without_timing(first), without_timing(second));
}

#[tokio::test]
async fn empty_plan_reproduces_patient_anchor() {
    let app = app();
    let id = create(&app, &vessel(8.0, &[(4.0, 0.6)])).await;
    let (_, anchors) = send(&app, "GET", &format!("/models/{id}/traces?path=0"), None).await;
    let anchor: Vec<f64> = anchors["traces"][0]["ffr"]["patient_hyperemia"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let (status, body) =
        send(&app, "POST", &format!("/models/{id}/evaluate"), Some(json!({ "plan": { "intervals": [] } }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["modified_edges"], 0);
    let post: Vec<f64> =
        body["traces"][0]["ffr_post"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(post.len(), anchor.len());
    for (p, a) in post.iter().zip(&anchor) {
        assert!((p - a).abs() < 1e-9, "{p} vs {a}");
    }
}

#[tokio::test]
async fn plan_errors_name_the_interval() {
    let app = app();
    let id = create(&app, &vessel(8.0, &[(4.0, 0.6)])).await;
    let uri = format!("/models/{id}/evaluate");
    let over = json!({ "plan": { "intervals": [
        { "path_id": 0, "arc_start": 3.0, "arc_end": 5.0, "target_fraction": 1.5 }
    ]}});
    let (status, body) = send(&app, "POST", &uri, Some(over)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "plan_outside_envelope");
    assert_eq!(body["error"]["detail"]["interval"], 0);

    let missing = json!({ "plan": { "intervals": [
        { "path_id": 7, "arc_start": 3.0, "arc_end": 5.0, "target_fraction": 1.0 }
    ]}});
    let (status, body) = send(&app, "POST", &uri, Some(missing)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "unknown_path");
}

#[tokio::test]
async fn traces_and_deletion() {
    let app = app();
    let id = create(&app, &healthy_bifurcation()).await;
    let (status, all) = send(&app, "GET", &format!("/models/{id}/traces"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(all["traces"].as_array().unwrap().len(), 2);
    assert_eq!(all["traces"][1]["ffr"].as_object().unwrap().len(), 4);

    let (status, body) = send(&app, "GET", &format!("/models/{id}/traces?path=9"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "unknown_path");
    let (status, body) = send(&app, "GET", &format!("/models/{id}/traces?path=left"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_query");

    let (status, _) = send(&app, "DELETE", &format!("/models/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    for (method, uri) in [("DELETE", format!("/models/{id}")), ("GET", format!("/models/{id}/lesions"))] {
        let (status, body) = send(&app, method, &uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(body["error"]["code"], "unknown_model");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_duplicate_creates_build_once() {
    let (app, store) = app_with(8, None);
    let tree = vessel(8.0, &[(4.0, 0.6)]);
    let requests = (0..6).map(|_| {
        let app = app.clone();
        let body = create_body(&tree);
        tokio::spawn(async move { send(&app, "POST", "/models", Some(body)).await })
    });
    let mut ids = Vec::new();
    let mut built = 0;
    for r in requests {
        let (status, body) = r.await.unwrap();
        assert!(status.is_success());
        built += usize::from(body["built"] == true);
        ids.push(body["model_id"].clone());
    }
    assert!(ids.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(built, 1);
    assert_eq!(store.builds_started(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_evaluations_agree() {
    let app = app();
    let id = create(&app, &vessel(8.0, &[(4.0, 0.6)])).await;
    let (_, lesions) = send(&app, "GET", &format!("/models/{id}/lesions"), None).await;
    let plan = lesions["lesions"][0]["suggested_plan"].clone();
    let tasks: Vec<_> = (0..8)
        .map(|i| {
            let (app, uri) = (app.clone(), format!("/models/{id}/evaluate"));
            let mut plan = plan.clone();
            plan["intervals"][0]["target_fraction"] = json!(if i % 2 == 0 { 1.0 } else { 0.5 });
            tokio::spawn(async move { (i, send(&app, "POST", &uri, Some(json!({ "plan": plan }))).await.1) })
        })
        .collect();
    let mut by_parity: [Option<Value>; 2] = [None, None];
    for t in tasks {
        let (i, body) = t.await.unwrap();
        let body = without_timing(body);
        match &by_parity[i % 2] {
            Some(seen) => assert_eq!(seen, &body),
            None => by_parity[i % 2] = Some(body),
        }
    }
    assert_ne!(by_parity[0], by_parity[1]);
}

#[tokio::test]
async fn eviction_and_persistence() {
    let (app, store) = app_with(1, None);
    let a = create(&app, &vessel(8.0, &[(4.0, 0.6)])).await;
    let _b = create(&app, &healthy_bifurcation()).await;
    assert_eq!(store.resident(), 1);
    let (status, _) = send(&app, "GET", &format!("/models/{a}/lesions"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let dir = tempfile::tempdir().unwrap();
    let (app, store) = app_with(1, Some(dir.path().to_path_buf()));
    let a = create(&app, &vessel(8.0, &[(4.0, 0.6)])).await;
    let b = create(&app, &healthy_bifurcation()).await;
    let (status, body) = send(&app, "GET", &format!("/models/{a}/lesions"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["lesions"].as_array().unwrap().len(), 1);
    assert_eq!(store.builds_started(), 2);

    // a fresh process over the same directory
    let (app, _) = app_with(4, Some(dir.path().to_path_buf()));
    let (status, _) = send(&app, "GET", &format!("/models/{b}/traces?path=1"), None).await;
    assert_eq!(status, StatusCode::OK);

    // a file whose contents do not hash to its name is ignored
    let path = dir.path().join(format!("{b}.json"));
    let mut session: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    session["surface"]["bc_hyperemia"]["aortic_pressure"] = json!(99_999.0);
    std::fs::write(&path, session.to_string()).unwrap();
    let (app, _) = app_with(4, Some(dir.path().to_path_buf()));
    let (status, _) = send(&app, "GET", &format!("/models/{b}/lesions"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = send(&app, "GET", "/models/..%2Fetc/lesions", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
