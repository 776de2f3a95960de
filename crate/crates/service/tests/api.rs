use std::path::Path;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rankaxis_core::embstore::write_npy;
use rankaxis_core::linalg::Matrix;
use rankaxis_core::synthetic::{planted_dataset, PlantedSpec};
use rankaxis_service::{router, AppState, JOURNAL_FILE};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

/// Embedding-only collection files; returns the manifest JSON.
fn write_collection(dir: &Path, name: &str, ids: &[&str], rows: &[Vec<f64>]) -> Value {
    let m = Matrix::from_rows(rows).unwrap();
    write_npy(&dir.join(format!("{name}.npy")), &m).unwrap();
    std::fs::write(dir.join(format!("{name}.txt")), ids.join("\n")).unwrap();
    json!({
        "name": name,
        "embeddings_path": dir.join(format!("{name}.npy")),
        "ids_path": dir.join(format!("{name}.txt")),
        "asset_url_template": "https://assets.example/{id}.jpg",
    })
}

fn app(state_dir: &Path) -> Router {
    router(AppState::open(state_dir).unwrap())
}

#[tokio::test]
async fn two_item_extremes_axis_and_queries() {
    let tmp = tempfile::tempdir().unwrap();
    let state_dir = tmp.path().join("state");
    let manifest = write_collection(tmp.path(), "toy", &["lo", "hi"], &[vec![0.0, 0.0], vec![3.0, 4.0]]);
    let app = app(&state_dir);

    let (s, v) = call(&app, Method::POST, "/collections", Some(json!({ "manifest": manifest }))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let c = v["collection_id"].as_str().unwrap().to_string();
    assert_eq!(c, "c1");

    let (s, list) = call(&app, Method::GET, "/collections", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list[0]["n_items"], 2);
    assert_eq!(list[0]["dim"], 2);

    let body = json!({"method": "extremes", "low_ids": ["lo"], "high_ids": ["hi"]});
    let (s, axis) = call(&app, Method::POST, &format!("/collections/{c}/axes"), Some(body)).await;
    assert_eq!(s, StatusCode::CREATED, "{axis}");
    let v: Vec<f64> = serde_json::from_value(axis["vector"].clone()).unwrap();
    assert!((v[0] - 0.6).abs() <= 1e-12 && (v[1] - 0.8).abs() <= 1e-12);
    let a = axis["axis_id"].as_str().unwrap().to_string();
    assert!(state_dir.join("axes").join(format!("{a}.json")).exists());

    let (s, page) = call(&app, Method::GET, &format!("/collections/{c}/rank?axis={a}&order=desc&limit=1"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(page["total"], 2);
    assert_eq!(page["items"][0]["item_id"], "hi");
    assert_eq!(page["items"][0]["score"], 5.0);

    let (_, p) = call(&app, Method::GET, &format!("/collections/{c}/percentiles?axis={a}&r=0,100"), None).await;
    assert_eq!(p[0]["item_id"], "lo");
    assert_eq!(p[1]["item_id"], "hi");

    let (s, item) = call(&app, Method::GET, &format!("/collections/{c}/items/hi"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(item["asset_url"], "https://assets.example/hi.jpg");
    assert_eq!(item["index"], 1);
}

#[tokio::test]
async fn error_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_collection(tmp.path(), "toy", &["a", "b"], &[vec![0.0, 1.0], vec![1.0, 0.0]]);
    let app = app(&tmp.path().join("state"));
    call(&app, Method::POST, "/collections", Some(json!({ "manifest": manifest }))).await;

    let (s, e) = call(&app, Method::POST, "/collections/c1/axes", Some(json!({"method": "raw", "vector": [1.0, 2.0, 3.0]}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["error"], "DimError");
    assert!(e["detail"].is_string());

    let (s, e) = call(&app, Method::POST, "/collections/c1/axes", Some(json!({"method": "extremes", "low_ids": ["a"], "high_ids": ["a"]}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["error"], "DegenerateAxis");

    let (s, e) = call(&app, Method::POST, "/collections/c9/axes", Some(json!({"method": "raw", "vector": [1.0, 0.0]}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["error"], "NotFound");

    let (s, e) = call(&app, Method::POST, "/collections/c1/axes", Some(json!({"method": "nope"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"], "BadRequest");

    let (s, _) = call(&app, Method::GET, "/collections/c1/items/zzz", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, Method::GET, "/collections/c1/rank?axis=a404", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (_, axis) = call(&app, Method::POST, "/collections/c1/axes", Some(json!({"method": "raw", "vector": [1.0, 0.0]}))).await;
    let a = axis["axis_id"].as_str().unwrap();
    let (s, e) = call(&app, Method::GET, &format!("/collections/c1/rank?axis={a}&offset=3"), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["error"], "RangeError");
    let (s, _) = call(&app, Method::DELETE, &format!("/axes/{a}"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = call(&app, Method::GET, &format!("/axes/{a}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn pages_concatenate_and_percentiles_use_nearest_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let ids = ["e", "d", "c", "b", "a"];
    let rows: Vec<Vec<f64>> = [3.0, -1.0, 7.0, 0.5, 2.0].iter().map(|&x| vec![x, 1.0]).collect();
    let manifest = write_collection(tmp.path(), "five", &ids, &rows);
    let app = app(&tmp.path().join("state"));
    call(&app, Method::POST, "/collections", Some(json!({ "manifest": manifest }))).await;
    let (_, axis) = call(&app, Method::POST, "/collections/c1/axes", Some(json!({"method": "raw", "vector": [1.0, 0.0]}))).await;
    let a = axis["axis_id"].as_str().unwrap();

    for order in ["asc", "desc"] {
        let (_, full) = call(&app, Method::GET, &format!("/collections/c1/rank?axis={a}&order={order}&limit=100"), None).await;
        let mut joined = Vec::new();
        for offset in (0..5).step_by(2) {
            let (_, p) = call(&app, Method::GET, &format!("/collections/c1/rank?axis={a}&order={order}&offset={offset}&limit=2"), None).await;
            joined.extend(p["items"].as_array().unwrap().clone());
        }
        assert_eq!(&joined, full["items"].as_array().unwrap());
    }

    let (_, asc) = call(&app, Method::GET, &format!("/collections/c1/rank?axis={a}&limit=5"), None).await;
    let (_, p) = call(&app, Method::GET, &format!("/collections/c1/percentiles?axis={a}&r=0,50,100"), None).await;
    for (k, idx) in [0usize, 2, 4].into_iter().enumerate() {
        assert_eq!(p[k]["item_id"], asc["items"][idx]["item_id"]);
        assert_eq!(p[k]["index"], idx);
    }
    let (_, strip) = call(&app, Method::GET, &format!("/collections/c1/percentiles?axis={a}"), None).await;
    let scores: Vec<f64> = strip.as_array().unwrap().iter().map(|e| e["score"].as_f64().unwrap()).collect();
    assert_eq!(scores.len(), 11);
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
}

#[tokio::test]
async fn journal_replay_restores_state() {
    let tmp = tempfile::tempdir().unwrap();
    let state_dir = tmp.path().join("state");
    let m1 = write_collection(tmp.path(), "one", &["x", "y"], &[vec![0.0, 0.0], vec![3.0, 4.0]]);
    let m2 = write_collection(tmp.path(), "two", &["p", "q", "r"], &[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]);
    let snapshot_of = |app: Router| async move {
        let (_, cols) = call(&app, Method::GET, "/collections", None).await;
        let (_, axes) = call(&app, Method::GET, "/axes", None).await;
        let (_, rank) = call(&app, Method::GET, "/collections/c2/rank?axis=a2&limit=10", None).await;
        (cols, axes, rank)
    };
    let before = {
        let app = app(&state_dir);
        call(&app, Method::POST, "/collections", Some(json!({ "manifest": m1 }))).await;
        call(&app, Method::POST, "/collections", Some(json!({ "manifest": m2 }))).await;
        call(&app, Method::POST, "/collections/c1/axes", Some(json!({"method": "raw", "vector": [1.0, 1.0]}))).await;
        call(&app, Method::POST, "/collections/c2/axes", Some(json!({"method": "extremes", "low_ids": ["p"], "high_ids": ["r"]}))).await;
        call(&app, Method::POST, "/collections/c2/axes", Some(json!({"method": "raw", "vector": [0.0, 1.0]}))).await;
        call(&app, Method::DELETE, "/axes/a3", None).await;
        snapshot_of(app).await
    };
    assert_eq!(before.1.as_array().unwrap().len(), 2);

    // a torn final record from an interrupted append is dropped
    let journal = state_dir.join(JOURNAL_FILE);
    let mut text = std::fs::read_to_string(&journal).unwrap();
    text.push_str("{\"event\":\"delete_ax");
    std::fs::write(&journal, text).unwrap();

    let app2 = app(&state_dir);
    let after = snapshot_of(app2.clone()).await;
    assert_eq!(before, after);

    // ids keep counting after a restart
    let (_, axis) = call(&app2, Method::POST, "/collections/c1/axes", Some(json!({"method": "raw", "vector": [1.0, 0.0]}))).await;
    assert_eq!(axis["axis_id"], "a4");
}

#[tokio::test]
async fn stale_axis_after_update() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_collection(tmp.path(), "toy", &["a", "b"], &[vec![0.0, 1.0], vec![1.0, 0.0]]);
    let app = app(&tmp.path().join("state"));
    call(&app, Method::POST, "/collections", Some(json!({ "manifest": manifest.clone() }))).await;
    call(&app, Method::POST, "/collections/c1/axes", Some(json!({"method": "raw", "vector": [1.0, 0.0]}))).await;
    let (s, v) = call(&app, Method::PUT, "/collections/c1", Some(json!({ "manifest": manifest }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["version"], 2);
    let (s, e) = call(&app, Method::GET, "/collections/c1/rank?axis=a1", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["error"], "StaleAxis");
}

#[tokio::test]
async fn labels_axis_on_planted_data() {
    let tmp = tempfile::tempdir().unwrap();
    let p = planted_dataset(&PlantedSpec::new(300, 16, 0.01, 4)).unwrap();
    let ds = &p.dataset;
    let dir = tmp.path();
    write_npy(&dir.join("emb.npy"), ds.embeddings.matrix()).unwrap();
    let ids: Vec<&str> = ds.embeddings.ids().iter().map(|i| i.as_str()).collect();
    std::fs::write(dir.join("ids.txt"), ids.join("\n")).unwrap();
    let mut csv = String::from("id,value\n");
    for (id, v) in ds.labels.iter() {
        csv.push_str(&format!("{},{v}\n", id.as_str()));
    }
    std::fs::write(dir.join("labels.csv"), csv).unwrap();
    let part = |p| ds.ids(p).iter().map(|i| i.as_str().to_string()).collect::<Vec<_>>();
    use rankaxis_core::embstore::SplitPart::*;
    let manifest = json!({
        "name": "planted", "embeddings_path": dir.join("emb.npy"), "ids_path": dir.join("ids.txt"),
        "labels_path": dir.join("labels.csv"), "attribute_name": "planted",
        "split": {"train": part(Train), "val": part(Val), "test": part(Test)},
    });
    let app = app(&dir.join("state"));
    let (s, v) = call(&app, Method::POST, "/collections", Some(json!({ "manifest": manifest }))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    for body in [
        json!({"method": "labels", "solver": "ridge", "lambda": 0.01}),
        json!({"method": "labels", "solver": "sgd", "n_trials": 6}),
    ] {
        let (s, axis) = call(&app, Method::POST, "/collections/c1/axes", Some(body)).await;
        assert_eq!(s, StatusCode::CREATED, "{axis}");
        assert!(axis["provenance"]["val_rho"].as_f64().unwrap() >= 0.99, "{axis}");
    }
}
