//! HTTP front end over a [`ScoreIndex`]: query-by-emoji search, emoji
//! prediction for free text and image features, and the catalog listing.

mod error;
mod predict;

use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use emojimodal::emoji::EmojiCatalog;
use emojimodal::retrieval::{query, Combine, EmojiQuery, RankedResult, ScoreIndex};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use predict::{Mode, PredictRequest, PredictResponse, Prediction, Predictor, DEFAULT_TOP_K};

pub const DEFAULT_SEARCH_K: usize = 10;

/// Shared state of a running service.
pub struct Service {
    catalog: EmojiCatalog,
    index: RwLock<Arc<ScoreIndex>>,
    predictor: Predictor,
    ui_dir: Option<PathBuf>,
}

impl Service {
    pub fn new(catalog: EmojiCatalog, index: ScoreIndex) -> emojimodal::Result<Self> {
        check_classes(&catalog, &index)?;
        Ok(Service {
            catalog,
            index: RwLock::new(Arc::new(index)),
            predictor: Predictor::default(),
            ui_dir: None,
        })
    }

    pub fn with_predictor(mut self, predictor: Predictor) -> Self {
        self.predictor = predictor;
        self
    }

    /// Serves static files from `dir` under `/ui/`.
    pub fn with_ui_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.ui_dir = Some(dir.into());
        self
    }

    pub fn catalog(&self) -> &EmojiCatalog {
        &self.catalog
    }

    pub fn index(&self) -> Arc<ScoreIndex> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Swaps in a new index. Requests already holding the old one finish
    /// against it.
    pub fn replace_index(&self, index: ScoreIndex) -> emojimodal::Result<Arc<ScoreIndex>> {
        check_classes(&self.catalog, &index)?;
        let mut slot = self.index.write().unwrap_or_else(|e| e.into_inner());
        Ok(std::mem::replace(&mut *slot, Arc::new(index)))
    }
}

fn check_classes(catalog: &EmojiCatalog, index: &ScoreIndex) -> emojimodal::Result<()> {
    if index.num_classes() != catalog.len() {
        return Err(emojimodal::Error::ShapeMismatch {
            what: "index classes against catalog",
            expected: catalog.len(),
            found: index.num_classes(),
        });
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
pub struct SearchParams {
    pub q: String,
    pub k: Option<usize>,
    pub combine: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchResponse {
    pub query: String,
    pub results: Vec<RankedResult>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CatalogItem {
    pub class_index: usize,
    pub emoji: String,
    pub name: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Health {
    pub status: String,
    pub documents: usize,
    pub classes: usize,
    pub scorer: String,
}

async fn search(
    State(service): State<Arc<Service>>,
    params: Result<Query<SearchParams>, QueryRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let k = params.k.unwrap_or(DEFAULT_SEARCH_K);
    if k == 0 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    let combine: Combine = params.combine.as_deref().unwrap_or("geo").parse()?;
    let q = EmojiQuery::parse(&params.q, &service.catalog)?;
    let index = service.index();
    let results = query(&index, &q, k, combine)?;
    log::debug!("search {:?} -> {} results", params.q, results.len());
    Ok(Json(SearchResponse {
        query: q.raw,
        results,
    }))
}

async fn predict(
    State(service): State<Arc<Service>>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Result<Json<PredictResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    Ok(Json(service.predictor.predict(&service.catalog, &req)?))
}

async fn catalog(State(service): State<Arc<Service>>) -> Json<Vec<CatalogItem>> {
    Json(
        service
            .catalog
            .entries()
            .iter()
            .map(|e| CatalogItem {
                class_index: e.class_index,
                emoji: e.sequence.chars().iter().collect(),
                name: e.name.clone(),
            })
            .collect(),
    )
}

async fn healthz(State(service): State<Arc<Service>>) -> Json<Health> {
    let index = service.index();
    Json(Health {
        status: "ok".into(),
        documents: index.len(),
        classes: index.num_classes(),
        scorer: index.scorer_tag().to_string(),
    })
}

pub fn router(service: Arc<Service>) -> Router {
    let mut app = Router::new()
        .route("/search", get(search))
        .route("/predict", post(predict))
        .route("/catalog", get(catalog))
        .route("/healthz", get(healthz));
    if let Some(dir) = &service.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.with_state(service)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    service: Arc<Service>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C.
pub async fn shutdown_signal() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        log::warn!("cannot listen for Ctrl-C: {e}");
        std::future::pending::<()>().await;
    }
    log::info!("shutting down");
}
