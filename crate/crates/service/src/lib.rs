//! HTTP query service: filtered search with a short preview, full CSV
//! export through expiring tokens, and metadata for building search forms.
//!
//! Routes, all under `/api/v1`:
//! - `GET /search?entity=&sources=&from=&to=&ner_tool=&sentiment_tool=&scope=`
//! - `GET /export/{token}`
//! - `GET /meta/sources`
//! - `GET /meta/taggers`
//!
//! Article text never leaves the service; rows carry the article URL only.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use qc_core::ingest::{Clock, SystemClock};
use qc_core::store::{rows_to_csv, Media, QueryFilter, ResultRow, Store, StoreError};
use qc_core::ScopeKind;

pub const DEFAULT_PREVIEW_LIMIT: usize = 20;
pub const DEFAULT_EXPORT_TTL: chrono::Duration = chrono::Duration::hours(1);

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    InvalidFilter(String),
    #[error("unknown export token")]
    UnknownExport,
    #[error("export token expired; re-run the search")]
    Expired,
    #[error("{0}")]
    StorageUnavailable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::InvalidFilter(_) => StatusCode::BAD_REQUEST,
            ApiError::UnknownExport => StatusCode::NOT_FOUND,
            ApiError::Expired => StatusCode::GONE,
            ApiError::StorageUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::InvalidFilter(_) => "InvalidFilter",
            ApiError::UnknownExport => "UnknownExport",
            ApiError::Expired => "Expired",
            ApiError::StorageUnavailable(_) => "StorageUnavailable",
            ApiError::Internal(_) => "Internal",
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::InvalidFilter(m) => ApiError::InvalidFilter(m),
            StoreError::StorageUnavailable(m) => ApiError::StorageUnavailable(m),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.code().into(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

/// Issued export tokens. An expired token answers 410 for one more TTL,
/// after which it is forgotten and answers 404.
pub struct ExportRegistry {
    ttl: chrono::Duration,
    entries: Mutex<HashMap<String, (QueryFilter, DateTime<Utc>)>>,
}

impl ExportRegistry {
    pub fn new(ttl: chrono::Duration) -> Self {
        ExportRegistry { ttl, entries: Mutex::new(HashMap::new()) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, (QueryFilter, DateTime<Utc>)>> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Returns the token and its expiry.
    pub fn issue(&self, filter: QueryFilter, now: DateTime<Utc>) -> (String, DateTime<Utc>) {
        let token = uuid::Uuid::new_v4().simple().to_string();
        let expires = now + self.ttl;
        let mut map = self.lock();
        let ttl = self.ttl;
        map.retain(|_, (_, exp)| *exp + ttl > now);
        map.insert(token.clone(), (filter, expires));
        (token, expires)
    }

    pub fn resolve(&self, token: &str, now: DateTime<Utc>) -> Result<QueryFilter, ApiError> {
        match self.lock().get(token) {
            None => Err(ApiError::UnknownExport),
            Some((_, exp)) if now >= *exp + self.ttl => Err(ApiError::UnknownExport),
            Some((_, exp)) if now >= *exp => Err(ApiError::Expired),
            Some((f, _)) => Ok(f.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    exports: Arc<ExportRegistry>,
    clock: Arc<dyn Clock>,
    preview_limit: usize,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        AppState {
            store: Arc::new(Mutex::new(store)),
            exports: Arc::new(ExportRegistry::new(DEFAULT_EXPORT_TTL)),
            clock: Arc::new(SystemClock),
            preview_limit: DEFAULT_PREVIEW_LIMIT,
        }
    }

    pub fn with_preview_limit(mut self, k: usize) -> Self {
        self.preview_limit = k.max(1);
        self
    }

    pub fn with_export_ttl(mut self, ttl: chrono::Duration) -> Self {
        self.exports = Arc::new(ExportRegistry::new(ttl));
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn exports(&self) -> &ExportRegistry {
        &self.exports
    }

    /// Runs `f` against the store on the blocking pool.
    async fn with_store<T: Send + 'static>(
        &self,
        f: impl FnOnce(&Store) -> Result<T, StoreError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let store = self.store.clone();
        tokio::task::spawn_blocking(move || {
            let guard = store.lock().map_err(|_| ApiError::StorageUnavailable("store lock poisoned".into()))?;
            f(&guard).map_err(ApiError::from)
        })
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
    }
}

/// Query parameters of `/search`. Absent or empty means "all".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchParams {
    pub entity: Option<String>,
    /// Comma-separated media names, or `ALL`.
    pub sources: Option<String>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub ner_tool: Option<String>,
    pub sentiment_tool: Option<String>,
    pub scope: Option<String>,
}

fn non_empty(v: &Option<String>) -> Option<&str> {
    v.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

fn parse_date(name: &str, v: &Option<String>) -> Result<Option<NaiveDate>, ApiError> {
    non_empty(v)
        .map(|s| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|_| ApiError::InvalidFilter(format!("{name}: expected YYYY-MM-DD, got {s:?}")))
        })
        .transpose()
}

impl SearchParams {
    pub fn to_filter(&self) -> Result<QueryFilter, ApiError> {
        let sources = match non_empty(&self.sources) {
            None => None,
            Some(s) if s.eq_ignore_ascii_case("ALL") => None,
            Some(s) => Some(s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect::<BTreeSet<_>>()),
        };
        let scope = non_empty(&self.scope)
            .map(|s| s.parse::<ScopeKind>().map_err(|e| ApiError::InvalidFilter(e.to_string())))
            .transpose()?;
        Ok(QueryFilter {
            entity: non_empty(&self.entity).unwrap_or_default().to_string(),
            sources,
            date_from: parse_date("from", &self.from)?,
            date_to: parse_date("to", &self.to)?,
            tagger: non_empty(&self.ner_tool).map(String::from),
            tool: non_empty(&self.sentiment_tool).map(String::from),
            scope,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub preview: Vec<ResultRow>,
    pub total: usize,
    pub export: String,
    pub export_expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggersResponse {
    pub ner_tools: Vec<String>,
    pub sentiment_tools: Vec<String>,
}

async fn search(
    State(state): State<AppState>,
    params: Result<Query<SearchParams>, QueryRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    let Query(params) = params.map_err(|e| ApiError::InvalidFilter(e.body_text()))?;
    let filter = params.to_filter()?;
    let f = filter.clone();
    let mut rows = state.with_store(move |s| s.query_rows(&f)).await?;
    let total = rows.len();
    rows.truncate(state.preview_limit);
    let (export, export_expires_at) = state.exports.issue(filter, state.clock.now());
    Ok(Json(SearchResponse { preview: rows, total, export, export_expires_at }))
}

async fn export(State(state): State<AppState>, Path(token): Path<String>) -> Result<Response, ApiError> {
    let filter = state.exports.resolve(&token, state.clock.now())?;
    let rows = state.with_store(move |s| s.query_rows(&filter)).await?;
    let body = rows_to_csv(&rows);
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"qc-export.csv\""),
        ],
        body,
    )
        .into_response())
}

async fn sources(State(state): State<AppState>) -> Result<Json<Vec<Media>>, ApiError> {
    Ok(Json(state.with_store(|s| s.media()).await?))
}

async fn taggers(State(state): State<AppState>) -> Result<Json<TaggersResponse>, ApiError> {
    let (ner_tools, sentiment_tools) = state.with_store(|s| Ok((s.taggers()?, s.tools()?))).await?;
    Ok(Json(TaggersResponse { ner_tools, sentiment_tools }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/search", get(search))
        .route("/api/v1/export/{token}", get(export))
        .route("/api/v1/meta/sources", get(sources))
        .route("/api/v1/meta/taggers", get(taggers))
        .with_state(state)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
