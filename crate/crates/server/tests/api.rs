use std::sync::{Arc, OnceLock};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use emojimodal::corpus::synth::signature_token;
use emojimodal::corpus::{generate_synthetic, split, ImageSynth, SynthConfig, SyntheticCorpus};
use emojimodal::retrieval::{build_index, query, Combine, EmojiQuery, ScoreIndex};
use emojimodal::text_model::{train_text_model, ModelShape, TextClassifier};
use emojimodal::train::TrainConfig;
use emojimodal::vision_model::{train_image_model, LinearSoftmaxModel};
use emojimodal::zeroshot::{EmbeddingTable, ZeroShotScorer};
use emojimodal_server::{router, serve, Predictor, SearchResponse, Service};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tower::ServiceExt;

const CLASSES: usize = 8;

struct Fixture {
    synth: SyntheticCorpus,
    text: TextClassifier,
    image: LinearSoftmaxModel,
    index: ScoreIndex,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let synth =
            generate_synthetic(&SynthConfig::new(CLASSES, 800, 1.0).with_image(ImageSynth::aligned(12, 0.2)), 3)
                .unwrap();
        let (train, val, _) = split(&synth.corpus, [0.8, 0.1, 0.1], 3).unwrap();
        let config = TrainConfig { learning_rate: 0.5, batch_size: 32, max_epochs: 10, ..Default::default() };
        let shape = ModelShape { embed_dim: 16, hidden: 16, max_len: 32 };
        let (text, _) = train_text_model(&train, &val, &shape, 1, &config).unwrap();
        let (image, _) = train_image_model(&train, &val, 1e-4, &config).unwrap();
        let index = build_index(&synth.corpus, &text).unwrap();
        Fixture { synth, text, image, index }
    })
}

fn service(with_models: bool) -> Arc<Service> {
    let f = fixture();
    let mut service = Service::new(f.synth.catalog.clone(), f.index.clone()).unwrap();
    if with_models {
        let table = EmbeddingTable::from_rows(f.synth.embedding_rows(16, 10, 3)).unwrap();
        service = service.with_predictor(Predictor {
            text: Some(f.text.clone()),
            image: Some(f.image.clone()),
            zeroshot: Some(ZeroShotScorer::new(&f.synth.catalog, table)),
            alpha: Some(0.5),
        });
    }
    Arc::new(service)
}

fn emoji(class: usize) -> String {
    fixture().synth.catalog.entry(class).unwrap().sequence.chars().iter().collect()
}

fn percent_encode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

async fn send(app: Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let response = app.oneshot(req).await.unwrap();
    let status = response.status();
    (status, to_bytes(response.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn get(app: Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap())
}

async fn post(app: Router, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, body) = send(app, req).await;
    (status, serde_json::from_slice(&body).unwrap())
}

fn error_code(body: &Value) -> &str {
    body["error"]["code"].as_str().unwrap_or_else(|| panic!("not an error body: {body}"))
}

#[tokio::test]
async fn health_and_catalog() {
    let app = router(service(false));
    let (status, body) = get(app.clone(), "/healthz").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["documents"], fixture().synth.corpus.len());
    let (status, body) = get(app, "/catalog").await;
    assert_eq!(status, StatusCode::OK);
    let items = body.as_array().unwrap();
    assert_eq!(items.len(), CLASSES);
    assert_eq!(items[2]["emoji"], emoji(2));
    assert_eq!(items[2]["class_index"], 2);
}

#[tokio::test]
async fn search_matches_library_query() {
    let f = fixture();
    let raw = format!("{}+{}", emoji(1), emoji(5));
    let (status, body) = get(router(service(false)), &format!("/search?q={}&k=7&combine=min", percent_encode(&raw))).await;
    assert_eq!(status, StatusCode::OK);
    let response: SearchResponse = serde_json::from_value(body).unwrap();
    let expected = query(&f.index, &EmojiQuery::parse(&raw, &f.synth.catalog).unwrap(), 7, Combine::Min).unwrap();
    assert_eq!(response.query, raw);
    assert_eq!(response.results, expected);
    assert_eq!(response.results.iter().map(|r| r.rank).collect::<Vec<_>>(), (1..=7).collect::<Vec<_>>());
}

#[tokio::test]
async fn search_top_hit_carries_signature() {
    let app = router(service(false));
    for class in 0..CLASSES {
        let (_, body) = get(app.clone(), &format!("/search?q={}&k=1", percent_encode(&emoji(class)))).await;
        let snippet = body["results"][0]["snippet"].as_str().unwrap();
        assert!(snippet.split_whitespace().any(|w| w == signature_token(class)), "class {class}: {snippet}");
    }
}

#[tokio::test]
async fn search_errors_are_structured() {
    let app = router(service(false));
    let (status, body) = get(app.clone(), &format!("/search?q={}", percent_encode("🦄"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&body), "unknown_emoji");
    assert!(body["error"]["message"].as_str().unwrap().contains("🦄"));

    for uri in [
        "/search".to_string(),
        format!("/search?q={}&k=0", percent_encode(&emoji(0))),
        format!("/search?q={}&k=many", percent_encode(&emoji(0))),
        format!("/search?q={}&combine=max", percent_encode(&emoji(0))),
        "/search?q=".to_string(),
    ] {
        let (status, body) = get(app.clone(), &uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert_eq!(error_code(&body), "invalid_request", "{uri}");
    }
}

#[tokio::test]
async fn predict_modes() {
    let app = router(service(true));
    let text = format!("so {} today", signature_token(4));

    let (status, body) = post(app.clone(), "/predict", &json!({ "text": text, "k": 3 }).to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["mode"], "text");
    assert_eq!(body["topk"].as_array().unwrap().len(), 3);
    assert_eq!(body["topk"][0]["emoji"], emoji(4));

    let mut features = vec![0.0; 12];
    features[6] = 1.0;
    let (_, body) = post(app.clone(), "/predict", &json!({ "image_features": features }).to_string()).await;
    assert_eq!(body["mode"], "image");
    assert_eq!(body["topk"][0]["emoji"], emoji(6));
    assert_eq!(body["topk"].as_array().unwrap().len(), 5);

    let (_, body) =
        post(app.clone(), "/predict", &json!({ "text": text, "image_features": features, "alpha": 1.0 }).to_string())
            .await;
    assert_eq!(body["mode"], "fused");
    assert_eq!(body["topk"][0]["emoji"], emoji(4));

    let (_, body) = post(app.clone(), "/predict", &json!({ "text": text, "mode": "zeroshot" }).to_string()).await;
    assert_eq!(body["mode"], "zeroshot");
    assert_eq!(body["topk"][0]["emoji"], emoji(4));
}

#[tokio::test]
async fn predict_errors_are_structured() {
    let with = router(service(true));
    let without = router(service(false));
    let cases = [
        (with.clone(), "{not json", StatusCode::BAD_REQUEST, "invalid_request"),
        (with.clone(), r#"{"text": "x", "bogus": 1}"#, StatusCode::BAD_REQUEST, "invalid_request"),
        (with.clone(), r#"{"text": "x", "alpha": 1.5}"#, StatusCode::BAD_REQUEST, "invalid_request"),
        (with.clone(), r#"{"image_features": [1.0, 2.0]}"#, StatusCode::BAD_REQUEST, "invalid_request"),
        (with.clone(), r#"{"mode": "fused", "text": "x"}"#, StatusCode::BAD_REQUEST, "invalid_request"),
        (with.clone(), r#"{"mode": "zeroshot"}"#, StatusCode::BAD_REQUEST, "invalid_request"),
        (with, r#"{"text": "x", "k": 0}"#, StatusCode::BAD_REQUEST, "invalid_request"),
        (without, r#"{"text": "x"}"#, StatusCode::SERVICE_UNAVAILABLE, "model_unavailable"),
    ];
    for (app, body, status, code) in cases {
        let (got, response) = post(app, "/predict", body).await;
        assert_eq!(got, status, "{body}");
        assert_eq!(error_code(&response), code, "{body}");
    }
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let app = router(service(true));
    let uri = format!("/search?q={}&k=20", percent_encode(&format!("{} {}", emoji(0), emoji(3))));
    let tasks: Vec<_> = (0..100)
        .map(|i| {
            let app = app.clone();
            let uri = uri.clone();
            tokio::spawn(async move {
                if i % 2 == 0 {
                    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
                } else {
                    let req = Request::post("/predict")
                        .header("content-type", "application/json")
                        .body(Body::from(json!({ "text": signature_token(3) }).to_string()))
                        .unwrap();
                    send(app, req).await
                }
            })
        })
        .collect();
    let mut bodies = [Vec::new(), Vec::new()];
    for (i, t) in tasks.into_iter().enumerate() {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        let slot = &mut bodies[i % 2];
        if slot.is_empty() {
            *slot = body;
        } else {
            assert_eq!(*slot, body);
        }
    }
}

#[tokio::test]
async fn index_swap_is_atomic_for_readers() {
    let f = fixture();
    let service = service(false);
    let held = service.index();
    let flipped = ScoreIndex::new(
        f.index.doc_ids().to_vec(),
        vec![String::new(); f.index.len()],
        vec![false; f.index.len()],
        (0..f.index.len()).flat_map(|i| f.index.row(i).iter().map(|s| 1.0 - s).collect::<Vec<_>>()).collect(),
        CLASSES,
        "flipped".into(),
    )
    .unwrap();
    let old = service.replace_index(flipped).unwrap();
    assert!(Arc::ptr_eq(&old, &held));
    assert_eq!(held.scorer_tag(), f.index.scorer_tag());
    let (_, body) = get(router(service.clone()), "/healthz").await;
    assert_eq!(body["scorer"], "flipped");

    let wrong = ScoreIndex::new(vec!["a".into()], vec![String::new()], vec![false], vec![1.0], 1, "x".into()).unwrap();
    assert!(service.replace_index(wrong).is_err());
}

#[tokio::test]
async fn serves_over_tcp_and_shuts_down() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, service(false), async {
        let _ = stopped.await;
    }));

    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    stream
        .write_all(b"GET /healthz HTTP/1.1\r\nhost: localhost\r\nconnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).await.unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"status\":\"ok\""));

    stop.send(()).unwrap();
    server.await.unwrap().unwrap();
}

#[tokio::test]
async fn serves_static_ui_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<title>emoji</title>").unwrap();
    let f = fixture();
    let service = Service::new(f.synth.catalog.clone(), f.index.clone()).unwrap().with_ui_dir(dir.path());
    let (status, body) = send(router(Arc::new(service)), Request::get("/ui/index.html").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<title>emoji</title>");
}
