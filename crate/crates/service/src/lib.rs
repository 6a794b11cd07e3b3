//! Stateless HTTP API over the `modkin` toolkit.
//!
//! Every request carries the full composition; the only shared state is the
//! immutable module catalog.

pub mod api;
mod body;
pub mod error;

use std::any::Any;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use modkin::composition::{Payload, Pose};
use modkin::dh_convert::{ConvertOptions, DhTable};
use modkin::dynamics::FeasibilityOptions;
use modkin::kinematics::IkOptions;
use modkin::{Catalog, Exec, ValidationOptions};
use serde_json::Value;
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::cors::{AllowOrigin, CorsLayer};

use body::Fields;
pub use error::ApiError;

pub const API_VERSION: &str = "modkin-api/1";

/// Request bodies above this size are refused with 413.
pub const BODY_LIMIT: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub catalog: Arc<Catalog>,
    /// Origins allowed by CORS; empty disables the CORS layer.
    pub cors_origins: Vec<String>,
    pub exec: Exec,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            catalog: Arc::new(Catalog::default()),
            cors_origins: Vec::new(),
            exec: Exec::default(),
        }
    }
}

type Shared = Arc<ServiceConfig>;
type ApiResult = Result<Json<Value>, ApiError>;

pub fn router(config: ServiceConfig) -> Router {
    let cors = cors_layer(&config.cors_origins);
    let mut app = Router::new()
        .route("/catalog", get(catalog))
        .route("/validate", post(validate))
        .route("/fk", post(fk))
        .route("/ik", post(ik))
        .route("/convert", post(convert))
        .route("/torques", post(torques))
        .route("/workspace", post(workspace))
        .route("/urdf", post(urdf))
        .fallback(not_found)
        .with_state(Arc::new(config))
        .layer(CatchPanicLayer::custom(panic_response));
    if let Some(cors) = cors {
        app = app.layer(cors);
    }
    app
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(config)).await
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([axum::http::header::CONTENT_TYPE]),
    )
}

fn panic_response(_: Box<dyn Any + Send + 'static>) -> Response {
    ApiError::internal().into_response()
}

async fn not_found() -> Response {
    ApiError {
        status: StatusCode::NOT_FOUND,
        ..ApiError::bad_request("NotFound", "no such route", None)
    }
    .into_response()
}

async fn read_fields(req: Request<Body>) -> Result<Fields, ApiError> {
    let bytes: Bytes = to_bytes(req.into_body(), BODY_LIMIT).await.map_err(|_| ApiError {
        status: StatusCode::PAYLOAD_TOO_LARGE,
        ..ApiError::bad_request(
            "PayloadTooLarge",
            format!("request body exceeds {BODY_LIMIT} bytes"),
            None,
        )
    })?;
    Fields::parse(&bytes)
}

/// Runs CPU-bound work off the async executor.
async fn compute<F>(f: F) -> ApiResult
where
    F: FnOnce() -> Result<Value, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json),
        Err(_) => Err(ApiError::internal()),
    }
}

async fn catalog(State(cfg): State<Shared>) -> Json<Value> {
    Json(api::catalog(&cfg.catalog))
}

async fn validate(State(cfg): State<Shared>, req: Request) -> ApiResult {
    let mut f = read_fields(req).await?;
    let comp = f.composition()?;
    let opts: ValidationOptions = f.optional("options")?.unwrap_or_default();
    f.finish()?;
    Ok(Json(api::validate(&cfg.catalog, &comp, &opts)))
}

async fn fk(State(cfg): State<Shared>, req: Request) -> ApiResult {
    let mut f = read_fields(req).await?;
    let comp = f.composition()?;
    let q: Vec<f64> = f.required("q")?;
    f.finish()?;
    compute(move || api::fk(&cfg.catalog, &comp, &q).map_err(|e| ApiError::domain(e, Some("q")))).await
}

async fn ik(State(cfg): State<Shared>, req: Request) -> ApiResult {
    let mut f = read_fields(req).await?;
    let comp = f.composition()?;
    let target: Pose = f.required("target_pose")?;
    let seed: Option<Vec<f64>> = f.optional("seed")?;
    let opts: IkOptions = f.optional("opts")?.unwrap_or_default();
    f.finish()?;
    compute(move || {
        api::ik(&cfg.catalog, &comp, &target, seed.as_deref(), &opts).map_err(|e| {
            let path = matches!(e, modkin::Error::DimensionMismatch { .. }).then_some("seed");
            ApiError::domain(e, path)
        })
    })
    .await
}

async fn convert(State(cfg): State<Shared>, req: Request) -> ApiResult {
    let mut f = read_fields(req).await?;
    let table: DhTable = f.required("dh_table")?;
    let opts: ConvertOptions = f.optional("options")?.unwrap_or_default();
    f.finish()?;
    compute(move || api::convert_table(&cfg.catalog, &table, &opts).map_err(|e| ApiError::domain(e, Some("dh_table"))))
        .await
}

async fn torques(State(cfg): State<Shared>, req: Request) -> ApiResult {
    let mut f = read_fields(req).await?;
    let comp = f.composition()?;
    let q: Option<Vec<f64>> = f.optional("q")?;
    let payload: Option<Payload> = f.optional("payload")?;
    let opts: FeasibilityOptions = f.optional("options")?.unwrap_or_default();
    f.finish()?;
    compute(move || {
        api::torques(&cfg.catalog, &comp, q.as_deref(), payload, &opts, cfg.exec).map_err(|e| {
            let path = matches!(e, modkin::Error::DimensionMismatch { .. }).then_some("q");
            ApiError::domain(e, path)
        })
    })
    .await
}

async fn workspace(State(cfg): State<Shared>, req: Request) -> ApiResult {
    let mut f = read_fields(req).await?;
    let comp = f.composition()?;
    let samples: usize = f.required("samples")?;
    let seed: u64 = f.optional("seed")?.unwrap_or(0);
    f.finish()?;
    compute(move || {
        api::workspace(&cfg.catalog, &comp, samples, seed, cfg.exec).map_err(|e| ApiError::domain(e, Some("samples")))
    })
    .await
}

async fn urdf(State(cfg): State<Shared>, req: Request) -> ApiResult {
    let mut f = read_fields(req).await?;
    let comp = f.composition()?;
    f.finish()?;
    compute(move || api::urdf(&cfg.catalog, &comp).map_err(|e| ApiError::domain(e, Some("composition")))).await
}
