use std::path::Path;

use axum::body::Body;
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use locint_cli::server::{router, ApiErrorBody, PendingImages, RefineResponse, SaveResponse, ServerState, VERSION_HEADER};
use locint_core::formats::{read_json, save_image, write_json};
use locint_core::pipeline::train_interpretation_model;
use locint_core::synth::{head8_schema, SyntheticDataset};
use locint_core::{
    compute_edge_map, generate_dataset, AnnotationRecord, DatasetManifest, EdgeParams, ExperimentData, ForestConfig,
    LibraryTier, LocalRegionImage, ModelSchema, SceneParams, TrainConfig,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tower::ServiceExt;

struct Setup {
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
    data: SyntheticDataset,
    app: Router,
}

/// A small synthetic dataset served from `<root>/images`, storing to `<root>/served`.
fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = generate_dataset(12, 20, &SceneParams::default(), 5).unwrap();
    data.write(&root).unwrap();
    save_image(&root.join("images/step.png"), &step_image()).unwrap();
    let state = ServerState::open(head8_schema(LibraryTier::Full), &root.join("images"), &root.join("served")).unwrap();
    Setup { _dir: dir, root, data, app: router(state) }
}

/// Dark left half, light right half.
fn step_image() -> LocalRegionImage {
    let (w, h) = (64, 64);
    let v = (0..w * h).map(|i| if i % w < 32 { 0.2 } else { 0.8 }).collect();
    LocalRegionImage::new("step", w, h, v).unwrap()
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<Vec<u8>>) -> (StatusCode, HeaderMap, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let (parts, body) = resp.into_parts();
    (parts.status, parts.headers, body.collect().await.unwrap().to_bytes().to_vec())
}

async fn get_json<T: DeserializeOwned>(app: &Router, uri: &str) -> (StatusCode, T) {
    let (status, _, body) = send(app, Method::GET, uri, None).await;
    (status, serde_json::from_slice(&body).unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&body))))
}

async fn post_json<B: Serialize, T: DeserializeOwned>(app: &Router, uri: &str, body: &B) -> (StatusCode, T) {
    let (status, _, bytes) = send(app, Method::POST, uri, Some(serde_json::to_vec(body).unwrap())).await;
    (status, serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&bytes))))
}

#[tokio::test]
async fn schema_and_pending_images() {
    let s = setup();
    let (status, schema): (_, ModelSchema) = get_json(&s.app, "/api/schema").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(schema, head8_schema(LibraryTier::Full));

    let (_, pending): (_, PendingImages) = get_json(&s.app, "/api/images").await;
    assert_eq!(pending.pending.len(), 33);
    assert!(pending.pending.windows(2).all(|w| w[0] < w[1]));

    let ann = &s.data.positives[0].annotation;
    let (status, saved): (_, SaveResponse) = post_json(&s.app, "/api/annotation", ann).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(saved, SaveResponse { ok: true, version: 1 });
    let (_, pending): (_, PendingImages) = get_json(&s.app, "/api/images").await;
    assert_eq!(pending.pending.len(), 32);
    assert!(!pending.pending.contains(&ann.image_id));
}

#[tokio::test]
async fn image_bytes_are_served_unchanged() {
    let s = setup();
    let id = s.data.negatives[0].id();
    let (status, headers, body) = send(&s.app, Method::GET, &format!("/api/image/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    assert_eq!(body, std::fs::read(s.root.join(format!("images/{id}.png"))).unwrap());

    let (status, err): (_, ApiErrorBody) = get_json(&s.app, "/api/image/missing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err.error, "unknown_image");
}

#[tokio::test]
async fn annotation_round_trip_with_version_echo() {
    let s = setup();
    let ann = &s.data.positives[3].annotation;
    let uri = format!("/api/annotation/{}", ann.image_id);

    let (status, err): (_, ApiErrorBody) = get_json(&s.app, &uri).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::NOT_FOUND, "not_found"));

    let (_, first): (_, SaveResponse) = post_json(&s.app, "/api/annotation", ann).await;
    let mut edited = ann.clone();
    edited.annotator = "second".into();
    let (_, second): (_, SaveResponse) = post_json(&s.app, "/api/annotation", &edited).await;
    assert_eq!((first.version, second.version), (1, 2));

    let (status, headers, body) = send(&s.app, Method::GET, &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[VERSION_HEADER], "2");
    let back: AnnotationRecord = serde_json::from_slice(&body).unwrap();
    assert_eq!(back, edited);

    let (status, err): (_, ApiErrorBody) = get_json(&s.app, "/api/annotation/missing").await;
    assert_eq!((status, err.error.as_str()), (StatusCode::NOT_FOUND, "unknown_image"));
}

#[tokio::test]
async fn invalid_annotations_are_rejected_with_structured_errors() {
    let s = setup();
    let ann = &s.data.positives[0].annotation;

    let mut partial = ann.clone();
    partial.bindings.pop();
    let (status, err): (_, ApiErrorBody) = post_json(&s.app, "/api/annotation", &partial).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::BAD_REQUEST, "invalid"));

    let mut future = ann.clone();
    future.format_version = "2.0".into();
    let (status, err): (_, ApiErrorBody) = post_json(&s.app, "/api/annotation", &future).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::BAD_REQUEST, "format_version"));

    let mut stray = ann.clone();
    stray.image_id = "missing".into();
    let (status, err): (_, ApiErrorBody) = post_json(&s.app, "/api/annotation", &stray).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::NOT_FOUND, "unknown_image"));

    let (status, _, body) = send(&s.app, Method::POST, "/api/annotation", Some(b"{ nope".to_vec())).await;
    let err: ApiErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!((status, err.error.as_str()), (StatusCode::BAD_REQUEST, "malformed"));
    assert!(!err.detail.is_empty());

    // Nothing above was stored.
    let (status, _, _) = send(&s.app, Method::GET, &format!("/api/annotation/{}", ann.image_id), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn refine_snaps_a_nearby_polyline_onto_the_edge() {
    let s = setup();
    let img = step_image();
    let edges = compute_edge_map(&img, &EdgeParams::default()).unwrap();
    let col = (0..64).find(|&x| edges.is_edge(x, 32)).unwrap();
    let drawn: Vec<[f64; 2]> = (0..12).map(|i| [(col as f64 + 1.5) / 64.0, (10.0 + 4.0 * i as f64) / 64.0]).collect();
    let req = serde_json::json!({ "image_id": "step", "polyline": drawn });
    let (status, resp): (_, RefineResponse) = post_json(&s.app, "/api/refine", &req).await;
    assert_eq!(status, StatusCode::OK);
    assert!(resp.snapped);
    assert_eq!(resp.polyline.len(), drawn.len());
    let edge_pixels: Vec<(f64, f64)> =
        (0..64).flat_map(|y| (0..64).map(move |x| (x, y))).filter(|&(x, y)| edges.is_edge(x, y)).map(|(x, y)| (x as f64, y as f64)).collect();
    for [x, y] in &resp.polyline {
        let (px, py) = (x * 64.0, y * 64.0);
        let d = edge_pixels.iter().map(|(ex, ey)| (px - ex).hypot(py - ey)).fold(f64::INFINITY, f64::min);
        assert!(d <= 1.0, "point ({px}, {py}) is {d} px from the edge");
    }
}

#[tokio::test]
async fn refine_far_from_edges_is_unchanged() {
    let s = setup();
    let img = step_image();
    let edges = compute_edge_map(&img, &EdgeParams::default()).unwrap();
    let col = (0..64).find(|&x| edges.is_edge(x, 32)).unwrap();
    let x = (col as f64 + 20.0) / 64.0;
    let drawn = vec![[x, 0.2], [x, 0.5], [x, 0.8]];
    let req = serde_json::json!({ "image_id": "step", "polyline": drawn });
    let (status, resp): (_, RefineResponse) = post_json(&s.app, "/api/refine", &req).await;
    assert_eq!(status, StatusCode::OK);
    assert!(!resp.snapped);
    assert_eq!(resp.polyline, drawn);

    let bad = serde_json::json!({ "image_id": "step", "polyline": [[0.5, 1.5], [0.5, 0.5]] });
    let (status, err): (_, ApiErrorBody) = post_json(&s.app, "/api/refine", &bad).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::BAD_REQUEST, "invalid"));
    let short = serde_json::json!({ "image_id": "step", "polyline": [[0.5, 0.5]] });
    let (status, _): (_, ApiErrorBody) = post_json(&s.app, "/api/refine", &short).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writes_to_one_image_are_serialized() {
    let s = setup();
    let ann = s.data.positives[1].annotation.clone();
    let tasks: Vec<_> = (0..24)
        .map(|i| {
            let app = s.app.clone();
            let mut rec = ann.clone();
            rec.annotator = format!("writer{i}");
            tokio::spawn(async move {
                let (_, r): (_, SaveResponse) = post_json(&app, "/api/annotation", &rec).await;
                (r.version, rec)
            })
        })
        .collect();
    let mut results = Vec::new();
    for t in tasks {
        results.push(t.await.unwrap());
    }
    let mut versions: Vec<u64> = results.iter().map(|r| r.0).collect();
    versions.sort();
    assert_eq!(versions, (1..=24).collect::<Vec<_>>());

    // The stored record is the one that received the last version.
    let last = results.iter().find(|r| r.0 == 24).unwrap();
    let (status, headers, body) = send(&s.app, Method::GET, &format!("/api/annotation/{}", ann.image_id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[VERSION_HEADER], "24");
    assert_eq!(serde_json::from_slice::<AnnotationRecord>(&body).unwrap(), last.1);
}

fn relink(manifest: &DatasetManifest, dir: &str) -> DatasetManifest {
    let mut m = manifest.clone();
    for e in &mut m.entries {
        if let Some(a) = &mut e.annotation {
            let file = Path::new(a).file_name().unwrap().to_str().unwrap().to_string();
            *a = format!("{dir}/{file}");
        }
    }
    m
}

#[tokio::test]
async fn served_records_train_unmodified() {
    let s = setup();
    for scene in &s.data.positives {
        let (status, _): (_, SaveResponse) = post_json(&s.app, "/api/annotation", &scene.annotation).await;
        assert_eq!(status, StatusCode::OK);
    }
    let original: DatasetManifest = read_json(&s.root.join("manifest.json")).unwrap();
    for e in &original.entries {
        if let Some(a) = &e.annotation {
            let served = s.root.join("served").join(Path::new(a).file_name().unwrap());
            assert_eq!(std::fs::read(served).unwrap(), std::fs::read(s.root.join(a)).unwrap());
        }
    }
    write_json(&s.root.join("served_manifest.json"), &relink(&original, "served")).unwrap();

    let (_, from_served) = ExperimentData::load(&s.root.join("served_manifest.json")).unwrap();
    let (_, from_original) = ExperimentData::load(&s.root.join("manifest.json")).unwrap();
    assert_eq!(from_served.train_annotations, from_original.train_annotations);
    let config = TrainConfig {
        iterations: 2,
        beam_width: 50,
        forest: ForestConfig { n_trees: 10, ..ForestConfig::new(3) },
        ..TrainConfig::new(3)
    };
    let d = &from_served;
    let schema = head8_schema(LibraryTier::Full);
    let (model, _) =
        train_interpretation_model(&d.train_annotations, &d.train_positives, &d.train_negatives, &schema, &config).unwrap();
    assert_eq!(model.training_meta.positive_count, 6);
}

#[test]
fn state_requires_a_readable_image_directory() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let res = ServerState::open(head8_schema(LibraryTier::Full), &missing, &dir.path().join("store"));
    assert!(res.is_err());
}
