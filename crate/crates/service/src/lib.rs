//! HTTP API over precomputed outlying signatures.
//!
//! The service holds one [`Session`] at a time. Readers clone an `Arc` to the
//! current session, so a swap triggered by `POST /api/datasets` is atomic:
//! each request sees either the old or the new session, never a mix.

use std::sync::{Arc, RwLock};

use axum::extract::DefaultBodyLimit;
use axum::http::{header, HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use outlying_core::AnalysisConfig;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub mod api;
pub mod error;
pub mod session;

pub use error::ApiError;
pub use session::{Session, SessionError};

/// Uploads larger than this are rejected.
pub const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

struct Shared {
    session: RwLock<Option<Arc<Session>>>,
    config: AnalysisConfig,
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// `config` is used for datasets uploaded later.
    pub fn new(config: AnalysisConfig, session: Option<Session>) -> Self {
        AppState {
            shared: Arc::new(Shared {
                session: RwLock::new(session.map(Arc::new)),
                config,
            }),
        }
    }

    pub fn session(&self) -> Option<Arc<Session>> {
        self.shared.session.read().expect("session lock").clone()
    }

    pub fn replace(&self, session: Session) {
        *self.shared.session.write().expect("session lock") = Some(Arc::new(session));
    }

    pub fn config(&self) -> &AnalysisConfig {
        &self.shared.config
    }
}

/// CORS policy: the given origin, or any origin when `None`.
pub fn cors(origin: Option<HeaderValue>) -> CorsLayer {
    let allow = match origin {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
}

pub fn router(state: AppState, cors: CorsLayer) -> Router {
    Router::new()
        .route("/api/meta", get(api::meta))
        .route("/api/timesteps", get(api::timesteps))
        .route("/api/timesteps/{t}/detail", get(api::detail))
        .route("/api/rank", get(api::rank))
        .route("/api/instances/{id}/profile", get(api::profile))
        .route("/api/datasets", post(api::upload))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .layer(cors)
        .with_state(state)
}

pub async fn serve(listener: TcpListener, app: Router) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "listening");
    }
    axum::serve(listener, app).await
}
