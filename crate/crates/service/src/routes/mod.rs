mod render;
mod scenes;
mod style;

use axum::routing::{get, post};
use axum::Router;

use crate::error::ApiError;
use crate::state::AppState;

pub use render::{MAX_FRAMES, PREVIEW_DEFAULT_RES};
pub use scenes::{apply, Changed, Op};

/// All endpoints, mounted under `/api/v1`.
pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/vocab", get(style::vocab))
        .route("/scenes", get(scenes::list).post(scenes::create))
        .route("/scenes/{id}", get(scenes::get).put(scenes::update))
        .route("/scenes/{id}/export", get(scenes::export))
        .route("/scenes/{id}/manipulate", post(scenes::manipulate))
        .route("/scenes/{id}/randomize", post(scenes::randomize))
        .route("/scenes/{id}/raster", get(render::raster))
        .route("/scenes/{id}/preview", post(render::preview))
        .route("/scenes/{id}/attention", post(render::attention))
        .route("/scenes/{id}/interpolate", post(render::interpolate))
        .route("/tokens", post(style::upload_tokens))
        .route("/tokens/{id}", get(style::get_tokens))
        .route("/distribution", get(style::distribution))
        .route("/distribution/fit", post(style::fit));
    Router::new()
        .nest("/api/v1", api)
        .fallback(|| async { ApiError::not_found("route", "requested path") })
        .with_state(state)
}
