//! Vocabulary, token files and the style distribution.

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};
use sparsescene::stylekit::fit_distribution;

use crate::error::{parse_json, ApiError, ApiResult};
use crate::state::AppState;

pub async fn vocab(State(state): State<AppState>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], state.vocab.to_json()).into_response()
}

/// Accepts either the binary `TOKE` format or the JSON form.
pub async fn upload_tokens(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let (id, t) = state.insert_tokens(&body)?;
    Ok(Json(json!({"id": id, "n": t.n(), "d_lm": t.d_lm(), "layer": t.layer})))
}

pub async fn get_tokens(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let t = state.tokens(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], t.to_json()).into_response())
}

#[derive(Deserialize, Default)]
struct FitBody {
    /// Scenes to fit on; all stored scenes if absent.
    #[serde(default)]
    scenes: Option<Vec<u64>>,
}

pub async fn fit(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: FitBody = if body.is_empty() { FitBody::default() } else { parse_json(&body)? };
    let all = state.scene_ids();
    let chosen: Vec<_> = match &req.scenes {
        None => all,
        Some(ids) => ids
            .iter()
            .map(|id| {
                let e = state.scene(&id.to_string())?;
                Ok((*id, e))
            })
            .collect::<ApiResult<_>>()?,
    };
    let mut scenes = Vec::with_capacity(chosen.len());
    for (_, entry) in chosen {
        scenes.push(entry.lock().await.scene.clone());
    }
    let dist = fit_distribution(&scenes)?;
    let text = state.set_distribution(dist)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

pub async fn distribution(State(state): State<AppState>) -> ApiResult<Response> {
    let guard = state.dist.read().expect("distribution lock");
    let dist = guard
        .as_ref()
        .ok_or_else(|| ApiError::not_found("distribution", "current"))?;
    let text = dist.to_json(&state.vocab.classes, &state.vocab.attributes);
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}
