//! Rasters, previews, attention maps and interpolation frames. The scene is
//! copied out under its lock and the work runs on the blocking pool.

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};
use sparsescene::condkernel::attention_forward;
use sparsescene::preview::{preview_png, preview_rgb, PreviewStyle};
use sparsescene::raster::{rasterize, render_png, render_raw, RasterKind};
use sparsescene::stylekit::interpolate_styles;
use sparsescene::SceneGraph;

use crate::error::{parse_json, ApiError, ApiResult};
use crate::state::AppState;

pub const PREVIEW_DEFAULT_RES: u32 = 64;
pub const MAX_FRAMES: usize = 64;

#[derive(Deserialize)]
pub struct RasterQuery {
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    res: Option<u32>,
    #[serde(default)]
    format: Option<String>,
}

fn revision_header(rev: u64) -> (header::HeaderName, String) {
    (header::HeaderName::from_static("x-scene-revision"), rev.to_string())
}

pub async fn raster(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RasterQuery>,
) -> ApiResult<Response> {
    let kind: RasterKind = q
        .kind
        .as_deref()
        .unwrap_or("class")
        .parse()
        .map_err(|e: String| ApiError::bad_request("invalid_kind", e))?;
    let raw = match q.format.as_deref() {
        None | Some("png") => false,
        Some("raw") => true,
        Some(other) => return Err(ApiError::bad_request("invalid_format", format!("unknown format `{other}`"))),
    };
    state.check_res(q.res)?;
    let (scene, rev) = {
        let entry = state.scene(&id)?;
        let e = entry.lock().await;
        let s = if kind == RasterKind::Bg { e.background_source() } else { &e.scene };
        (s.clone(), e.revision)
    };
    let st = state.clone();
    let bytes = state
        .run_blocking(move || {
            let c = &st.vocab.classes;
            Ok(if raw {
                render_raw(&scene, c, kind, q.res)?
            } else {
                render_png(&scene, c, kind, q.res)?
            })
        })
        .await?;
    let ctype = if raw { "application/octet-stream" } else { "image/png" };
    Ok(([(header::CONTENT_TYPE, ctype.to_string()), revision_header(rev)], bytes).into_response())
}

#[derive(Deserialize)]
struct PreviewBody {
    #[serde(default = "attributes")]
    style: String,
    #[serde(default)]
    tokens: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    res: Option<u32>,
}

fn attributes() -> String {
    "attributes".into()
}

async fn snapshot(state: &AppState, id: &str) -> ApiResult<(SceneGraph, u64)> {
    let entry = state.scene(id)?;
    let e = entry.lock().await;
    Ok((e.scene.clone(), e.revision))
}

pub async fn preview(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: PreviewBody = parse_json(&body)?;
    let res = req.res.unwrap_or(PREVIEW_DEFAULT_RES);
    state.check_res(Some(res))?;
    let tokens = match (req.style.as_str(), &req.tokens) {
        ("plain" | "attributes", _) => None,
        ("tokens", Some(t)) => Some(state.tokens(t)?),
        ("tokens", None) => return Err(ApiError::bad_request("invalid_style", "style `tokens` needs a tokens id")),
        (other, _) => return Err(ApiError::bad_request("invalid_style", format!("unknown style `{other}`"))),
    };
    let (scene, rev) = snapshot(&state, &id).await?;
    let weights = state.preview_weights(req.seed);
    let bytes = state
        .run_blocking(move || {
            let style = match (req.style.as_str(), &tokens) {
                ("plain", _) => PreviewStyle::Plain,
                (_, Some(t)) => PreviewStyle::Tokens(t),
                _ => PreviewStyle::Attributes,
            };
            let (_, rgb, _) = preview_rgb(&scene, &weights, style, Some(res))?;
            Ok(preview_png(&rgb)?)
        })
        .await?;
    Ok(([(header::CONTENT_TYPE, "image/png".to_string()), revision_header(rev)], bytes).into_response())
}

#[derive(Deserialize)]
struct AttentionBody {
    tokens: String,
    #[serde(default)]
    seed: u64,
}

/// Per-class attention over the caption tokens: one entry for every class
/// present in the scene plus "no class", each with `H` rows of `n` weights.
pub async fn attention(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: AttentionBody = parse_json(&body)?;
    let tok = state.tokens(&req.tokens)?;
    let (scene, rev) = snapshot(&state, &id).await?;
    let weights = state.preview_weights(req.seed);
    let st = state.clone();
    state
        .run_blocking(move || {
            let (out, _) = attention_forward(&tok, &weights.attention)?;
            let mut classes = rasterize(&scene).classes_present();
            classes.insert(0);
            let (heads, n) = (out.weights.dim(1), out.weights.dim(2));
            let entries: Vec<Value> = classes
                .iter()
                .map(|&c| {
                    let base = usize::from(c) * heads * n;
                    let rows: Vec<&[f64]> = (0..heads)
                        .map(|h| &out.weights.data()[base + h * n..base + (h + 1) * n])
                        .collect();
                    let name = if c == 0 { Some("no class") } else { st.vocab.classes.name(c) };
                    json!({"class": c, "name": name, "weights": rows})
                })
                .collect();
            Ok(Json(json!({
                "revision": rev,
                "heads": heads,
                "tokens": n,
                "layer": tok.layer,
                "classes": entries,
            })))
        })
        .await
}

#[derive(Deserialize)]
struct InterpolateBody {
    from: String,
    to: String,
    steps: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    res: Option<u32>,
}

/// Slerp between the contextualized class tables of two captions and
/// preview each step. Frames are base64 PNGs.
pub async fn interpolate(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: InterpolateBody = parse_json(&body)?;
    if req.steps > MAX_FRAMES {
        return Err(ApiError::bad_request("too_many_steps", format!("at most {MAX_FRAMES} steps")));
    }
    let res = req.res.unwrap_or(PREVIEW_DEFAULT_RES);
    state.check_res(Some(res))?;
    let (a, b) = (state.tokens(&req.from)?, state.tokens(&req.to)?);
    let (scene, rev) = snapshot(&state, &id).await?;
    let weights = state.preview_weights(req.seed);
    state
        .run_blocking(move || {
            let ca = attention_forward(&a, &weights.attention)?.0.ctx;
            let cb = attention_forward(&b, &weights.attention)?.0.ctx;
            let engine = base64::engine::general_purpose::STANDARD;
            let frames = interpolate_styles(&ca, &cb, req.steps)?
                .iter()
                .map(|ctx| {
                    let (_, rgb, _) = preview_rgb(&scene, &weights, PreviewStyle::Context(ctx), Some(res))?;
                    Ok(engine.encode(preview_png(&rgb)?))
                })
                .collect::<ApiResult<Vec<String>>>()?;
            Ok(Json(json!({"revision": rev, "frames": frames})))
        })
        .await
}
